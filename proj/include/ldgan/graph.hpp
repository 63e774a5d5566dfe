#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ldgan/tensor.hpp"

namespace ldgan {

/// Handle to a node in a Graph.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const { return id != npos; }
};

enum class Mode { train, eval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBceClamp = 1e-7;

/// A trainable tensor with its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad();
};

template <typename T>
void zero_grads(std::span<Parameter<T>* const> params);

/// Running statistics of one batch-norm layer.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels) : running_mean({channels}, T{0}), running_var({channels}, T{1}) {}
};

/// Per-sample linear map used by `Graph::apply_linear`: reads one input sample, writes one output sample.
template <typename T>
using SampleMap = std::function<void(std::span<const T>, std::span<T>)>;

/// Reverse-mode tape. Nodes are appended in evaluation order, so the tape is
/// already topologically sorted; `backward` walks it once in reverse.
///
/// A Graph is built for one forward/backward pass and then discarded. Parameters
/// live outside the graph; `backward` adds into `Parameter::grad`.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor<T> value);
  /// Binds a parameter. Binding the same parameter twice returns the same node.
  Var param(Parameter<T>& p);

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient after backward(); empty when no gradient reached the node.
  const Tensor<T>& grad(Var v) const { return nodes_.at(v.id).grad; }
  std::size_t size() const { return nodes_.size(); }
  /// Hash of the sign pattern of every relu/leaky_relu input on this tape. Two tapes of the
  /// same network with equal patterns lie on the same smooth piece.
  std::uint64_t activation_pattern() const { return pattern_; }

  /// Back-propagates from a single-element node.
  void backward(Var loss);

  // Convolutions. `w` is (out, in, kh, kw) for conv2d and (in, out, kh, kw) for
  // conv_transpose2d, so the same tensor makes the two mutually adjoint.
  Var conv2d(Var x, Var w, std::size_t stride, std::size_t pad);
  Var conv_transpose2d(Var x, Var w, std::size_t stride, std::size_t pad);
  Var bias_add(Var x, Var bias);
  Var batch_norm2d(Var x, Var gamma, Var beta, BatchNormState<T>& state, Mode mode);

  Var relu(Var x);
  Var leaky_relu(Var x, T alpha);
  Var sigmoid(Var x);
  Var tanh(Var x);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, T factor);
  /// x times a single-element node.
  Var scale_by(Var x, Var factor);
  Var concat_channels(Var a, Var b);
  Var reshape(Var x, Shape shape);
  Var apply_linear(Var x, Shape sample_out_shape, SampleMap<T> forward, SampleMap<T> adjoint);

  Var sum(Var x);
  Var mse(Var pred, Var target);
  /// Mean over the batch of per-sample squared error norms.
  Var batch_sse(Var pred, Var target);
  /// Binary cross-entropy with predictions clamped to [kBceClamp, 1 - kBceClamp].
  Var bce(Var pred, Var target);
  /// Euclidean norm of the per-coordinate population variance across axis 0.
  Var variance_norm(Var x);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad = false;
    std::function<void()> backward;
    Parameter<T>* param = nullptr;
  };

  Var push(Tensor<T> value, bool needs_grad);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Tensor<T>& grad_buffer(Var v);
  const Tensor<T>& out_grad(Var v) const { return nodes_[v.id].grad; }
  // df is expressed through the op's output value.
  template <typename F, typename DF>
  Var unary(Var x, F f, DF df_from_out);

  void track_kinks(Var x);

  std::vector<Node> nodes_;
  std::uint64_t pattern_ = 14695981039346656037ull;
  std::unordered_map<const Parameter<T>*, std::size_t> bound_;
};

}  // namespace ldgan
