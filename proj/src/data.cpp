#include "uda/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>

#include "uda/error.hpp"

namespace uda {

DomainDataset::DomainDataset(LabeledSet source_train, LabeledSet source_test,
                             Tensor2 target_train_features,
                             std::vector<int> target_train_labels,
                             LabeledSet target_test, std::size_t class_count)
    : source_train_(std::move(source_train)),
      source_test_(std::move(source_test)),
      target_train_features_(std::move(target_train_features)),
      target_train_labels_(std::move(target_train_labels)),
      target_test_(std::move(target_test)),
      class_count_(class_count) {
    const std::size_t dim = source_train_.features.cols;
    if (source_test_.features.cols != dim ||
        target_train_features_.cols != dim || target_test_.features.cols != dim)
        throw DimensionError("dataset: splits disagree on feature width");
    auto check = [&](const std::vector<int>& labels, std::size_t rows,
                     const char* split) {
        if (labels.size() != rows)
            throw DataError(std::string("dataset: ") + split + " has " +
                            std::to_string(rows) + " rows but " +
                            std::to_string(labels.size()) + " labels");
        for (int y : labels)
            if (y < 0 || static_cast<std::size_t>(y) >= class_count_)
                throw LabelError(std::string("dataset: ") + split + " label " +
                                 std::to_string(y) + " out of range [0," +
                                 std::to_string(class_count_) + ")");
    };
    check(source_train_.labels, source_train_.features.rows, "source_train");
    check(source_test_.labels, source_test_.features.rows, "source_test");
    check(target_train_labels_, target_train_features_.rows, "target_train");
    check(target_test_.labels, target_test_.features.rows, "target_test");
}

const std::vector<int>& DomainDataset::target_train_labels_eval_only() const {
    ++label_reads_;
    return target_train_labels_;
}

namespace {

void take_rows(Tensor2& features, std::vector<int>* labels,
               const std::vector<std::size_t>& order, std::size_t limit) {
    Tensor2 out(limit, features.cols);
    std::vector<int> out_labels;
    if (labels) out_labels.reserve(limit);
    for (std::size_t i = 0; i < limit; ++i) {
        const std::size_t r = order[i];
        for (std::size_t j = 0; j < features.cols; ++j)
            out.at(i, j) = features.at(r, j);
        if (labels) out_labels.push_back((*labels)[r]);
    }
    features = std::move(out);
    if (labels) *labels = std::move(out_labels);
}

}  // namespace

void DomainDataset::limit_train_sizes(std::size_t source_limit,
                                      std::size_t target_limit,
                                      std::uint64_t seed) {
    Rng rng(seed);
    if (source_limit > 0 && source_limit < source_train_.features.rows) {
        std::vector<std::size_t> order(source_train_.features.rows);
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        take_rows(source_train_.features, &source_train_.labels, order, source_limit);
    }
    if (target_limit > 0 && target_limit < target_train_features_.rows) {
        std::vector<std::size_t> order(target_train_features_.rows);
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        take_rows(target_train_features_, &target_train_labels_, order, target_limit);
    }
}

void ShiftSpec::validate() const {
    if (!(scale > 0.0)) throw SpecError("shift: scale must be positive");
    if (noise_sigma < 0.0) throw SpecError("shift: noise_sigma must be >= 0");
}

namespace {

// y = R(rotation) * (scale * x) + translation (rotation in the first two
// coordinates, translation zero-padded).
void apply_shift(std::vector<double>& point, const ShiftSpec& shift) {
    for (double& v : point) v *= shift.scale;
    if (point.size() >= 2) {
        const double c = std::cos(shift.rotation);
        const double s = std::sin(shift.rotation);
        const double x = point[0], y = point[1];
        point[0] = c * x - s * y;
        point[1] = s * x + c * y;
    }
    for (std::size_t j = 0; j < shift.translation.size() && j < point.size(); ++j)
        point[j] += shift.translation[j];
}

}  // namespace

DomainDataset gen_blobs(std::size_t class_count, std::size_t n_per_class,
                        std::size_t dim, const ShiftSpec& shift,
                        std::uint64_t seed) {
    if (class_count < 2) throw SpecError("gen_blobs: need at least 2 classes");
    if (dim < 2) throw SpecError("gen_blobs: need at least 2 dimensions");
    if (n_per_class < 1) throw SpecError("gen_blobs: need at least 1 sample per class");
    shift.validate();

    constexpr double kRadius = 3.0;
    constexpr double kSigma = 0.5;
    std::vector<std::vector<double>> cluster_centers(class_count,
                                                     std::vector<double>(dim, 0.0));
    for (std::size_t k = 0; k < class_count; ++k) {
        const double angle = 2.0 * 3.14159265358979323846 *
                             static_cast<double>(k) / static_cast<double>(class_count);
        cluster_centers[k][0] = kRadius * std::cos(angle);
        cluster_centers[k][1] = kRadius * std::sin(angle);
    }

    Rng rng(seed);
    auto draw_split = [&](std::size_t per_class, bool shifted) {
        LabeledSet set;
        set.features = Tensor2(per_class * class_count, dim);
        std::size_t row = 0;
        for (std::size_t k = 0; k < class_count; ++k) {
            for (std::size_t i = 0; i < per_class; ++i, ++row) {
                std::vector<double> point(dim);
                for (std::size_t j = 0; j < dim; ++j)
                    point[j] = cluster_centers[k][j] + kSigma * rng.normal();
                if (shifted) {
                    apply_shift(point, shift);
                    if (shift.noise_sigma > 0.0)
                        for (double& v : point) v += shift.noise_sigma * rng.normal();
                }
                for (std::size_t j = 0; j < dim; ++j) set.features.at(row, j) = point[j];
                set.labels.push_back(static_cast<int>(k));
            }
        }
        return set;
    };

    const std::size_t test_per_class = std::max<std::size_t>(1, n_per_class / 5);
    LabeledSet source_train = draw_split(n_per_class, false);
    LabeledSet source_test = draw_split(test_per_class, false);
    LabeledSet target_train = draw_split(n_per_class, true);
    LabeledSet target_test = draw_split(test_per_class, true);
    return DomainDataset(std::move(source_train), std::move(source_test),
                         std::move(target_train.features),
                         std::move(target_train.labels), std::move(target_test),
                         class_count);
}

DomainDataset gen_two_moons(std::size_t n, const ShiftSpec& shift,
                            std::uint64_t seed) {
    if (n < 20) throw SpecError("gen_two_moons: need at least 20 samples");
    shift.validate();

    constexpr double kPi = 3.14159265358979323846;
    Rng rng(seed);
    auto draw_split = [&](std::size_t total, bool shifted) {
        LabeledSet set;
        set.features = Tensor2(total, 2);
        const std::size_t n0 = total - total / 2;  // remainder goes to class 0
        for (std::size_t i = 0; i < total; ++i) {
            const int label = i < n0 ? 0 : 1;
            const double angle = kPi * rng.next_double();
            std::vector<double> point(2);
            if (label == 0) {
                point[0] = std::cos(angle);
                point[1] = std::sin(angle);
            } else {
                point[0] = 1.0 - std::cos(angle);
                point[1] = 0.5 - std::sin(angle);
            }
            if (shift.noise_sigma > 0.0) {
                point[0] += shift.noise_sigma * rng.normal();
                point[1] += shift.noise_sigma * rng.normal();
            }
            if (shifted) apply_shift(point, shift);
            set.features.at(i, 0) = point[0];
            set.features.at(i, 1) = point[1];
            set.labels.push_back(label);
        }
        return set;
    };

    const std::size_t test_n = std::max<std::size_t>(10, n / 5);
    LabeledSet source_train = draw_split(n, false);
    LabeledSet source_test = draw_split(test_n, false);
    LabeledSet target_train = draw_split(n, true);
    LabeledSet target_test = draw_split(test_n, true);
    return DomainDataset(std::move(source_train), std::move(source_test),
                         std::move(target_train.features),
                         std::move(target_train.labels), std::move(target_test), 2);
}

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

std::uint32_t read_u32be(const std::vector<unsigned char>& bytes,
                         std::size_t offset, const std::string& what) {
    if (offset + 4 > bytes.size())
        throw FormatError("idx: truncated file while reading " + what +
                          " at offset " + std::to_string(offset));
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
           (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[offset + 3]);
}

std::string hex_bytes(const std::vector<unsigned char>& bytes, std::size_t count) {
    std::ostringstream os;
    os << std::hex;
    for (std::size_t i = 0; i < count && i < bytes.size(); ++i) {
        os << "0x";
        os << (bytes[i] >> 4);
        os << (bytes[i] & 0xF);
        if (i + 1 < count && i + 1 < bytes.size()) os << " ";
    }
    return os.str();
}

}  // namespace

std::pair<Tensor2, std::vector<int>> load_idx(
    const std::filesystem::path& images_path,
    const std::filesystem::path& labels_path,
    std::optional<std::size_t> downsample_to) {
    const std::vector<unsigned char> img = read_file(images_path);
    const std::uint32_t img_magic = read_u32be(img, 0, "images magic");
    if (img_magic != kImagesMagic)
        throw FormatError("idx: bad images magic bytes " + hex_bytes(img, 4) +
                          " (expected 0x00000803)");
    const std::uint32_t img_count = read_u32be(img, 4, "image count");
    const std::uint32_t height = read_u32be(img, 8, "image rows");
    const std::uint32_t width = read_u32be(img, 12, "image cols");
    const std::size_t pixels =
        static_cast<std::size_t>(img_count) * height * width;
    if (img.size() < 16 + pixels)
        throw FormatError("idx: images file truncated: expected " +
                          std::to_string(16 + pixels) + " bytes, got " +
                          std::to_string(img.size()));
    if (img.size() > 16 + pixels)
        throw FormatError("idx: images file has " +
                          std::to_string(img.size() - 16 - pixels) +
                          " trailing bytes");

    const std::vector<unsigned char> lab = read_file(labels_path);
    const std::uint32_t lab_magic = read_u32be(lab, 0, "labels magic");
    if (lab_magic != kLabelsMagic)
        throw FormatError("idx: bad labels magic bytes " + hex_bytes(lab, 4) +
                          " (expected 0x00000801)");
    const std::uint32_t lab_count = read_u32be(lab, 4, "label count");
    if (lab.size() < 8 + lab_count)
        throw FormatError("idx: labels file truncated: expected " +
                          std::to_string(8 + lab_count) + " bytes, got " +
                          std::to_string(lab.size()));
    if (lab.size() > 8 + lab_count)
        throw FormatError("idx: labels file has " +
                          std::to_string(lab.size() - 8 - lab_count) +
                          " trailing bytes");
    if (img_count != lab_count)
        throw DataError("idx: image/label count mismatch: " +
                        std::to_string(img_count) + " images vs " +
                        std::to_string(lab_count) + " labels");

    std::size_t out_h = height, out_w = width;
    if (downsample_to) {
        const std::size_t s = *downsample_to;
        if (s == 0 || height % s != 0 || width % s != 0)
            throw SpecError("idx: cannot average-pool " + std::to_string(height) +
                            "x" + std::to_string(width) + " down to " +
                            std::to_string(s) + "x" + std::to_string(s));
        out_h = out_w = s;
    }

    Tensor2 features(img_count, out_h * out_w);
    const std::size_t bh = height / out_h;  // pooling block sides
    const std::size_t bw = width / out_w;
    for (std::size_t i = 0; i < img_count; ++i) {
        const std::size_t base = 16 + i * height * width;
        for (std::size_t r = 0; r < out_h; ++r) {
            for (std::size_t c = 0; c < out_w; ++c) {
                double sum = 0.0;
                for (std::size_t dr = 0; dr < bh; ++dr)
                    for (std::size_t dc = 0; dc < bw; ++dc)
                        sum += static_cast<double>(
                            img[base + (r * bh + dr) * width + (c * bw + dc)]);
                features.at(i, r * out_w + c) =
                    sum / (255.0 * static_cast<double>(bh * bw));
            }
        }
    }
    std::vector<int> labels(lab_count);
    for (std::size_t i = 0; i < lab_count; ++i)
        labels[i] = static_cast<int>(lab[8 + i]);
    return {std::move(features), std::move(labels)};
}

Tensor2 normalize(const Tensor2& features, const Tensor2& stats_from) {
    if (features.cols != stats_from.cols)
        throw DimensionError("normalize: widths differ: " + features.shape_str() +
                             " vs " + stats_from.shape_str());
    if (stats_from.rows == 0) throw DataError("normalize: empty statistics split");
    const std::size_t n = stats_from.rows;
    std::vector<double> mean(features.cols, 0.0), sd(features.cols, 0.0);
    for (std::size_t j = 0; j < features.cols; ++j) {
        for (std::size_t i = 0; i < n; ++i) mean[j] += stats_from.at(i, j);
        mean[j] /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = stats_from.at(i, j) - mean[j];
            sd[j] += d * d;
        }
        sd[j] = std::sqrt(sd[j] / static_cast<double>(n));
    }
    Tensor2 out = features;
    constexpr double kZeroStd = 1e-12;
    for (std::size_t j = 0; j < features.cols; ++j) {
        if (sd[j] <= kZeroStd) continue;  // constant column passes through
        for (std::size_t i = 0; i < features.rows; ++i)
            out.at(i, j) = (features.at(i, j) - mean[j]) / sd[j];
    }
    return out;
}

namespace {

void write_csv(const std::filesystem::path& path, const Tensor2& features,
               const std::vector<int>& labels, char domain) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write file: " + path.string());
    for (std::size_t j = 0; j < features.cols; ++j) out << "f" << j << ",";
    out << "label,domain\n";
    char buf[32];
    for (std::size_t i = 0; i < features.rows; ++i) {
        for (std::size_t j = 0; j < features.cols; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", features.at(i, j));
            out << buf << ",";
        }
        out << labels[i] << "," << domain << "\n";
    }
}

}  // namespace

void export_dataset_csv(const DomainDataset& dataset,
                        const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_csv(dir / "source_train.csv", dataset.source_train().features,
              dataset.source_train().labels, 'S');
    write_csv(dir / "source_test.csv", dataset.source_test().features,
              dataset.source_test().labels, 'S');
    write_csv(dir / "target_train.csv", dataset.target_train_features(),
              dataset.target_train_labels_eval_only(), 'T');
    write_csv(dir / "target_test.csv", dataset.target_test().features,
              dataset.target_test().labels, 'T');
}

BatchIterator::BatchIterator(const DomainDataset& dataset, std::size_t batch_size,
                             std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), rng_(seed) {
    if (batch_size_ == 0) throw SpecError("batch size must be positive");
    if (dataset.source_train().features.rows == 0 ||
        dataset.target_train_features().rows == 0)
        throw DataError("batch iterator: empty train split");
    source_order_.resize(dataset.source_train().features.rows);
    target_order_.resize(dataset.target_train_features().rows);
    reshuffle_source();
    reshuffle_target();
}

void BatchIterator::reshuffle_source() {
    std::iota(source_order_.begin(), source_order_.end(), std::size_t{0});
    rng_.shuffle(source_order_);
    source_cursor_ = 0;
}

void BatchIterator::reshuffle_target() {
    std::iota(target_order_.begin(), target_order_.end(), std::size_t{0});
    rng_.shuffle(target_order_);
    target_cursor_ = 0;
}

std::size_t BatchIterator::steps_per_epoch() const {
    const std::size_t n = source_order_.size();
    return (n + batch_size_ - 1) / batch_size_;
}

void BatchIterator::start_epoch() {
    ++epoch_;
    reshuffle_source();
    if (target_cursor_ >= target_order_.size()) reshuffle_target();
}

std::optional<BatchIterator::Batch> BatchIterator::next() {
    if (source_cursor_ >= source_order_.size()) return std::nullopt;
    const std::size_t take =
        std::min(batch_size_, source_order_.size() - source_cursor_);

    Batch batch;
    const LabeledSet& src = dataset_->source_train();
    batch.source_features = Tensor2(take, src.features.cols);
    batch.source_labels.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t r = source_order_[source_cursor_ + i];
        for (std::size_t j = 0; j < src.features.cols; ++j)
            batch.source_features.at(i, j) = src.features.at(r, j);
        batch.source_labels.push_back(src.labels[r]);
    }
    source_cursor_ += take;

    const Tensor2& tgt = dataset_->target_train_features();
    batch.target_features = Tensor2(take, tgt.cols);
    for (std::size_t i = 0; i < take; ++i) {
        if (target_cursor_ >= target_order_.size()) reshuffle_target();
        const std::size_t r = target_order_[target_cursor_++];
        for (std::size_t j = 0; j < tgt.cols; ++j)
            batch.target_features.at(i, j) = tgt.at(r, j);
    }
    return batch;
}

}  // namespace uda
