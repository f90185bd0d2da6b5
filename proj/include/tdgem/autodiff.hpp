#pragma once

// Eager reverse-mode autodiff over Tensor values. Each op computes its value
// immediately via the kernels layer and records a backward closure on the
// tape; Graph::backward replays the closures in reverse creation order.
//
// The op set is exactly what the editing pipelines need: dense affine maps,
// the normalization flavors of the mapper, the color conversion, masked
// reductions and the image-range plumbing. Gradients of every op are checked
// against central finite differences in the test suite.

#include <cstddef>
#include <functional>
#include <vector>

#include "tdgem/tensor.hpp"

namespace tdgem::ad {

class Graph;

struct Var {
    Graph* graph = nullptr;
    int id = -1;
    bool valid() const { return graph != nullptr && id >= 0; }
};

class Graph {
public:
    // Leaf that never receives a gradient.
    Var constant(Tensor v);
    // Differentiable leaf.
    Var input(Tensor v);

    const Tensor& val(Var v) const;
    // Valid after backward(); zero tensor for untouched nodes.
    const Tensor& grad(Var v) const;

    // root must be a single-element tensor
    void backward(Var root);

    void clear();
    std::size_t num_nodes() const { return nodes_.size(); }

    // low-level: appends a node; used by the op implementations
    using BackwardFn = std::function<void(Graph&, int)>;
    Var emit(Tensor val, bool requires_grad, BackwardFn back);

    Tensor& node_val(int id) { return nodes_[id].val; }
    const Tensor& node_val(int id) const { return nodes_[id].val; }
    Tensor& node_grad(int id) { return nodes_[id].grad; }
    bool node_requires_grad(int id) const { return nodes_[id].requires_grad; }

private:
    struct Node {
        Tensor val;
        Tensor grad;
        BackwardFn back;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
};

// elementwise (same shape)
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double c);
Var abs_t(Var a);
Var leaky_relu(Var a, double slope);
Var tanh_t(Var a);

// shape plumbing
Var reshape(Var a, std::vector<std::size_t> shape);
Var slice_rows(Var a, std::size_t r0, std::size_t r1);
Var concat_rows(const std::vector<Var>& parts);

// linear algebra
Var matmul(Var a, Var b);
// rows of x through W x + b:  (n x din) -> (n x dout), W is (dout x din)
Var affine_rows(Var x, Var w, Var b);
Var mul_rowvec(Var a, Var v);
Var add_rowvec(Var a, Var v);

// reductions (scalar result)
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
Var l2norm(Var a);

// scalar x scalar / tensor x scalar
Var div_s(Var a, Var b);
Var mul_scalar_t(Var a, Var s);
Var div_scalar_t(Var a, Var s);

// normalizations
Var pixelnorm_rows(Var x, double eps);        // row / sqrt(mean(row^2) + eps)
Var rownorm_meanstd(Var y, double eps);       // (y - mu) / (sigma + eps), per row
Var layernorm_vec(Var x, double eps);         // (x - mu) / sqrt(var + eps)
Var normalize_vec(Var v, double eps);         // v / (|v| + eps)

// imaging
// (x + 1)/2 clamped to [0,1]; the clamp is straight-through in the backward
Var signed_to_unit(Var a);
Var srgb_to_lab(Var rgb_unit);
// per-channel weighted mean with constant mask weights; mask sum must be > 0
Var masked_mean_channels(Var pixels, const Tensor& mask);
// per-channel mean over pixel rows [r0, r1)
Var channel_mean_rows(Var img, std::size_t height, std::size_t width,
                      std::size_t r0, std::size_t r1);
Var mul_mask_bcast(Var img, const Tensor& mask);
Var avgpool2d(Var img, std::size_t height, std::size_t width, std::size_t fh,
              std::size_t fw);

// composites
Var mse(Var a, Var b);
Var cosine_similarity(Var a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace tdgem::ad
