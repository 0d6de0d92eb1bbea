#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "isopoint/common.hpp"

namespace isopoint::ag {

/// Dense row-major double tensor node with reverse-mode differentiation.
///
/// Graphs are built dynamically: each op returns a new Tensor holding its
/// inputs alive; Tensor::backward() runs the recorded backward rules in
/// reverse topological order, accumulating into .grad() of every node with
/// requires_grad. Broadcasting is restricted to the leading axis (a row
/// vector added to every row of a matrix); everything else is fixed-shape.
class Tensor;

namespace detail {
struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated only when requires_grad
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // pulls node.grad into parents' grads

    std::size_t size() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};
}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double fill, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    std::size_t size() const { return node_->size(); }
    int dim(int axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }

    std::vector<double>& values() { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    std::vector<double>& grad();
    const std::vector<double>& grad() const { return node_->grad; }
    void zero_grad();

    /// Reverse pass from a scalar tensor; accumulates into every
    /// requires_grad ancestor.
    void backward();

    detail::Node* node() const { return node_.get(); }
    std::shared_ptr<detail::Node> shared_node() const { return node_; }

    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// ---- core ops ------------------------------------------------------------

/// C[M x N] = A[M x K] * B[K x N]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [N x M] from [M x N]
Tensor transpose(const Tensor& a);
/// Same-shape addition, or broadcast of a row vector [N] / [1 x N] over [M x N].
Tensor add(const Tensor& a, const Tensor& b);
/// Elementwise product of same-shape tensors.
Tensor mul(const Tensor& a, const Tensor& b);
/// Multiply by a compile-time constant.
Tensor scale(const Tensor& a, double c);
/// Multiply every element by a learned scalar (shape [1]) -- the scaling neuron.
Tensor scalar_gate(const Tensor& a, const Tensor& s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// Softmax along `axis` (0 or 1) of a 2-D tensor; rows/cols sum to 1.
Tensor softmax(const Tensor& a, int axis = 1);
/// Max over `axis` of a 2-D tensor: axis 0 -> [N], axis 1 -> [M].
/// Gradient flows to the first argmax.
Tensor reduce_max(const Tensor& a, int axis);
/// Tile a [N] or [1 x N] row vector to [rows x N].
Tensor repeat_rows(const Tensor& v, int rows);
/// Valid 2-D convolution: x[H x W x Cin] (*) k[KH x KW x Cin x Cout] -> [H' x W' x Cout].
Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride_h = 1, int stride_w = 1);
/// Max pooling on [H x W x C] with the given window and stride.
Tensor max_pool2d(const Tensor& x, int pool_h, int pool_w, int stride_h = 0, int stride_w = 0);
/// Inverted dropout: train mode zeroes with prob p and rescales by 1/(1-p);
/// eval mode is the identity.
Tensor dropout(const Tensor& a, double p, bool train, Rng& rng);
/// Concatenate along axis 0 or 1 (1-D tensors: axis 0).
Tensor concat(const std::vector<Tensor>& parts, int axis);
/// Rows of `table` [V x E] selected by `indices` -> [n x E].
Tensor embedding(const Tensor& table, const std::vector<int>& indices);
Tensor reshape(const Tensor& a, std::vector<int> new_shape);
/// Sum of all elements -> scalar.
Tensor sum(const Tensor& a);

/// Mean over points with positive weight of weight * (-log softmax(logits)[label]).
/// Masked points carry weight 0 and are excluded from the mean.
/// Throws DataError on a label outside [0, C).
Tensor weighted_softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                      const std::vector<double>& weights);

// ---- parameter store -----------------------------------------------------

enum class Init { Zero, HeUniform, SmallUniform };

/// Ordered name -> parameter registry shared by the networks and optimizers.
class ParamStore {
public:
    Tensor create(const std::string& name, std::vector<int> shape, Init init, Rng& rng);
    Tensor get(const std::string& name) const;
    bool has(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<Tensor> tensors() const;
    void zero_grad();
    std::size_t parameter_count() const;

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace isopoint::ag
