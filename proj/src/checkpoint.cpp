#include "uda/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "uda/error.hpp"

namespace uda {

namespace {

constexpr char kMagic[] = "DIALCKPT1";
constexpr std::size_t kMagicLen = 9;
constexpr std::uint32_t kMaxNameLen = 4096;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor2& t) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(t.rows));
    write_u32(out, static_cast<std::uint32_t>(t.cols));
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
}

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : path_(path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open checkpoint: " + path.string());
        bytes_.assign(std::istreambuf_iterator<char>(in),
                      std::istreambuf_iterator<char>());
    }

    bool at_end() const { return offset_ == bytes_.size(); }
    std::size_t offset() const { return offset_; }

    void expect_magic() {
        if (bytes_.size() < kMagicLen ||
            std::memcmp(bytes_.data(), kMagic, kMagicLen) != 0)
            throw FormatError("checkpoint: bad magic in " + path_.string() +
                              " (expected DIALCKPT1)");
        offset_ = kMagicLen;
    }

    std::uint32_t read_u32(const char* what) {
        need(4, what);
        std::uint32_t v;
        std::memcpy(&v, bytes_.data() + offset_, 4);
        offset_ += 4;
        return v;
    }

    std::string read_name() {
        const std::uint32_t len = read_u32("tensor name length");
        if (len == 0 || len > kMaxNameLen)
            throw FormatError("checkpoint: implausible name length " +
                              std::to_string(len) + " at offset " +
                              std::to_string(offset_ - 4));
        need(len, "tensor name");
        std::string name(reinterpret_cast<const char*>(bytes_.data() + offset_), len);
        offset_ += len;
        return name;
    }

    Tensor2 read_payload() {
        const std::uint32_t rows = read_u32("tensor rows");
        const std::uint32_t cols = read_u32("tensor cols");
        const std::size_t count = static_cast<std::size_t>(rows) * cols;
        need(count * sizeof(double), "tensor values");
        Tensor2 t(rows, cols);
        std::memcpy(t.values.data(), bytes_.data() + offset_,
                    count * sizeof(double));
        offset_ += count * sizeof(double);
        return t;
    }

private:
    void need(std::size_t n, const char* what) {
        if (offset_ + n > bytes_.size())
            throw FormatError("checkpoint: truncated while reading " +
                              std::string(what) + " at offset " +
                              std::to_string(offset_) + " of " + path_.string());
    }

    std::filesystem::path path_;
    std::vector<unsigned char> bytes_;
    std::size_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const ModelParams& params, const CenterTable& centers,
                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out.write(kMagic, kMagicLen);
    for (const auto& [name, tensor] : params.named_tensors())
        write_tensor(out, name, *tensor);
    write_tensor(out, "centers", centers.centers);
    write_tensor(out, "centers.gamma", Tensor2(1, 1, centers.gamma));
    write_tensor(out, "centers.initialized",
                 Tensor2(1, 1, centers.initialized ? 1.0 : 0.0));
    if (!centers.zero_init_classes.empty()) {
        Tensor2 zi(1, centers.zero_init_classes.size());
        for (std::size_t i = 0; i < centers.zero_init_classes.size(); ++i)
            zi.at(0, i) = static_cast<double>(centers.zero_init_classes[i]);
        write_tensor(out, "centers.zero_init", zi);
    }
    if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Reader reader(path);
    reader.expect_magic();

    std::map<std::string, Tensor2> tensors;
    while (!reader.at_end()) {
        std::string name = reader.read_name();
        if (tensors.count(name))
            throw FormatError("checkpoint: duplicate tensor " + name);
        tensors.emplace(std::move(name), reader.read_payload());
    }

    auto take = [&](const std::string& name) {
        auto it = tensors.find(name);
        if (it == tensors.end())
            throw FormatError("checkpoint: missing tensor " + name);
        Tensor2 t = std::move(it->second);
        tensors.erase(it);
        return t;
    };
    auto collect_mlp = [&](const std::string& prefix) {
        Mlp net;
        for (std::size_t l = 0;; ++l) {
            const std::string wname = prefix + ".w" + std::to_string(l);
            if (!tensors.count(wname)) break;
            DenseLayer layer{take(wname), take(prefix + ".b" + std::to_string(l))};
            net.layers.push_back(std::move(layer));
        }
        return net;
    };

    Checkpoint ckpt;
    ckpt.params.encoder = collect_mlp("encoder");
    if (ckpt.params.encoder.layers.empty())
        throw FormatError("checkpoint: no encoder tensors found");
    ckpt.params.classifier = DenseLayer{take("classifier.w"), take("classifier.b")};
    ckpt.params.discriminator = collect_mlp("discriminator");

    ckpt.centers.centers = take("centers");
    ckpt.centers.gamma = take("centers.gamma").values.at(0);
    ckpt.centers.initialized = take("centers.initialized").values.at(0) != 0.0;
    if (tensors.count("centers.zero_init")) {
        const Tensor2 zi = take("centers.zero_init");
        for (double v : zi.values)
            ckpt.centers.zero_init_classes.push_back(static_cast<int>(v));
    }
    if (!tensors.empty())
        throw FormatError("checkpoint: unrecognized tensor " +
                          tensors.begin()->first);
    return ckpt;
}

}  // namespace uda
