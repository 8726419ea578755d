#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "binadapt/layers.hpp"
#include "binadapt/tensor.hpp"

namespace binadapt {

using NodeId = std::size_t;
using Bindings = std::map<std::string, Tensor>;

enum class OpKind {
  kInput,
  kParameter,
  kConv2d,
  kConvTranspose2d,
  kRelu,
  kSigmoid,
  kDropout,
  kAdd,
  kScale,
  kGradientReversal,
  kSum,
  kBinaryCrossEntropy,
};

const char* op_name(OpKind kind);

struct Node {
  OpKind kind = OpKind::kInput;
  std::string name;
  std::vector<NodeId> inputs;
  ConvSpec conv;
  // Dropout rate, scale factor or GRL lambda depending on kind.
  double coefficient = 0.0;
  // Declared shape for inputs; empty means "any".
  Shape shape;
};

enum class Mode {
  kInference,
  kTraining,
  // Training semantics, but reuse the dropout masks of the previous forward.
  kTrainingFrozenMasks,
};

struct ForwardOptions {
  Mode mode = Mode::kInference;
  // Dropout masks derive from (seed, node name), so a node's mask does not
  // depend on which other nodes exist in the graph.
  std::uint64_t seed = 0;
  // Named outputs to evaluate; empty evaluates every output.
  std::vector<std::string> outputs;
  // Verification only: each gradient-reversal node returns
  // ref - lambda * (x - ref), where ref is its input at the last capture.
  // The value at ref is unchanged and its true derivative is -lambda, so
  // finite differences of this surrogate see the reversed gradient.
  bool linearize_reversal = false;
};

/// Static computation graph. Nodes are appended in topological order; a node
/// can only consume nodes created before it. The graph owns its parameters
/// and the activations of the most recent forward pass, so one instance must
/// not be shared between threads. Copies are independent.
class Graph {
 public:
  NodeId input(const std::string& name, Shape shape = {});
  NodeId parameter(const std::string& name, Tensor value);
  NodeId conv2d(const std::string& name, NodeId x, NodeId weights, NodeId bias,
                const ConvSpec& spec);
  NodeId conv2d_transpose(const std::string& name, NodeId x, NodeId weights, NodeId bias,
                          const ConvSpec& spec);
  NodeId relu(const std::string& name, NodeId x);
  NodeId sigmoid(const std::string& name, NodeId x);
  NodeId dropout(const std::string& name, NodeId x, double rate);
  NodeId add(const std::string& name, NodeId a, NodeId b);
  NodeId scale(const std::string& name, NodeId x, double factor);
  NodeId gradient_reversal(const std::string& name, NodeId x, const GrlSpec& spec);
  NodeId sum(const std::string& name, NodeId x);
  NodeId binary_cross_entropy(const std::string& name, NodeId pred, NodeId target);

  void set_output(const std::string& name, NodeId node);
  NodeId output(const std::string& name) const;
  bool has_output(const std::string& name) const { return outputs_.count(name) != 0; }
  NodeId find(const std::string& node_name) const;

  std::map<std::string, Tensor> forward(const Bindings& bindings,
                                        const ForwardOptions& options = {});

  // Reverse-mode pass from a scalar node evaluated by the last forward.
  // Gradients land in each evaluated node's grad slot; returns the gradient
  // of every parameter reached (zero-filled for unreached parameters).
  GradientSet backward(NodeId loss);
  GradientSet backward(const std::string& loss_output) { return backward(output(loss_output)); }

  // Shapes of named outputs given input shapes, without evaluating anything.
  std::map<std::string, Shape> infer_shapes(const std::map<std::string, Shape>& inputs) const;

  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;

  void set_reversal_lambda(double lambda);
  // Records every gradient-reversal input for linearize_reversal.
  void capture_reversal_reference();

  // Per-ReLU sign pattern of the last forward, used to detect kinks.
  std::vector<std::uint8_t> relu_pattern() const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Tensor& value(NodeId id) const;
  bool evaluated(NodeId id) const { return id < evaluated_.size() && evaluated_[id]; }

 private:
  NodeId append(Node node);
  void check_id(NodeId id, const std::string& consumer) const;
  std::vector<char> closure(const std::vector<NodeId>& roots) const;
  Shape node_shape(const Node& node, const std::vector<Shape>& shapes) const;
  Tensor evaluate(NodeId id, const Bindings& bindings, const ForwardOptions& options);
  void propagate(NodeId id);

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> names_;
  std::map<std::string, NodeId> outputs_;
  ParameterSet params_;

  std::vector<Tensor> values_;
  std::vector<char> evaluated_;
  std::vector<DropoutMask> masks_;
  std::vector<Tensor> reversal_reference_;
  bool has_forward_ = false;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  // Elements whose perturbation crossed a ReLU kink and were retried with a
  // smaller step.
  std::size_t kink_retries = 0;
};

/// Compares the analytic gradient of `parameter` with central differences of
/// `loss_output`. Relative error per element is
/// |a - n| / max(|a|, |n|, 1e-8); the maximum is reported. Dropout masks are
/// drawn once by a training forward (when options.mode is training) and then
/// frozen; gradient-reversal nodes are checked through their surrogate.
/// When the loss is a weighted sum of reductions, the central difference is
/// taken term by term and summed with compensation.
GradCheckResult grad_check(Graph& graph, const Bindings& bindings,
                           const std::string& loss_output, const std::string& parameter,
                           double epsilon, ForwardOptions options = {});

}  // namespace binadapt
