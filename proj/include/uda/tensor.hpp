#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace uda {

// Dense row-major 2-D array of doubles with an optional gradient slot.
// All math in the library runs in 64-bit precision.
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    std::optional<std::vector<double>> grad;

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c, double fill = 0.0);
    static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> data);

    std::size_t size() const { return values.size(); }
    double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
    std::span<const double> row(std::size_t i) const {
        return {values.data() + i * cols, cols};
    }

    // Adds g into the gradient slot, creating a zero slot first if absent.
    void accumulate_grad(std::span<const double> g);
    void clear_grad() { grad.reset(); }

    std::string shape_str() const;  // e.g. "3x4"
};

// Plain value kernels. The tape ops below call these for their forward
// pass, so recorded and tape-free forwards produce identical bits.
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 add_bias(const Tensor2& x, const Tensor2& bias);
Tensor2 relu(const Tensor2& x);
Tensor2 softmax_rows(const Tensor2& logits);

// Handle to a node recorded on a Tape.
struct Var {
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t id = npos;
    bool valid() const { return id != npos; }
};

// Records a forward pass and replays it in reverse to accumulate
// gradients. A tape is confined to one thread for the duration of one
// forward/backward pass, and backward is single-shot: replaying a
// consumed tape throws instead of silently double-accumulating.
class Tape {
public:
    using PullFn = std::function<void(Tape&, std::size_t node_id)>;

    // Leaf whose gradient is not tracked beyond the tape.
    Var constant(Tensor2 value);
    // Leaf bound to external storage; backward accumulates into
    // tensor.grad. Binding the same tensor more than once sums the
    // contributions (this is how a shared encoder sees both domains).
    Var parameter(Tensor2& tensor);
    // Records an op result with its reverse rule.
    Var emit(Tensor2 value, PullFn pull);

    const Tensor2& value(Var v) const;
    std::span<const double> adjoint(Var v) const;
    void add_to_adjoint(Var v, std::span<const double> g);
    void scatter_adjoint(Var v, std::size_t offset, double g);

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse.
    void backward(Var scalar_loss);

    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

private:
    struct Node {
        Tensor2 value;
        std::vector<double> adj;
        PullFn pull;
        Tensor2* bound = nullptr;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;

    const Node& node_at(Var v) const;
    Node& node_at(Var v);
};

// Recorded ops. Shape violations throw DimensionError naming both shapes.
Var matmul(Tape& t, Var a, Var b);
Var add_bias(Tape& t, Var x, Var bias);
Var relu(Tape& t, Var x);
Var add(Tape& t, Var a, Var b);       // elementwise, same shape
Var scale(Tape& t, Var x, double k);  // elementwise multiply by constant
// Scalar sum of x weighted elementwise by a constant tensor.
Var weighted_sum(Tape& t, Var x, const Tensor2& weights);

// Mean cross entropy of row-wise softmax against integer labels.
// Probabilities are returned as plain values for pseudo-labeling.
// Backward rule per row: (softmax - one_hot) / n.
struct SoftmaxXent {
    Var loss;      // 1x1
    Tensor2 probs; // n x K
};
SoftmaxXent softmax_cross_entropy(Tape& t, Var logits, const std::vector<int>& labels);

// Mean binary cross entropy on logits (n x 1) against {0,1} labels,
// computed in log-sum-exp-stable form; finite for |logit| <= 1e4.
Var bce_with_logits(Tape& t, Var logits, const std::vector<int>& labels);

// Sum over (row, anchor) pairs of ||features[row] - anchors[anchor]||^2.
// Gradient flows to features only; anchors are plain data. An empty pair
// list yields a scalar zero. Backs both center losses.
Var sum_squared_row_distance(Tape& t, Var features,
                             std::span<const std::size_t> row_indices,
                             std::span<const int> anchor_indices,
                             const Tensor2& anchors);
// All rows, anchor picked per row by label.
Var sum_squared_row_distance(Tape& t, Var features,
                             std::span<const int> anchor_indices,
                             const Tensor2& anchors);

}  // namespace uda
