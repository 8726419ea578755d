#include "binadapt/graph.hpp"

#include <algorithm>
#include <cmath>

#include "binadapt/error.hpp"
#include "binadapt/rng.hpp"

namespace binadapt {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kParameter: return "parameter";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kConvTranspose2d: return "conv2d_transpose";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kDropout: return "dropout";
    case OpKind::kAdd: return "add";
    case OpKind::kScale: return "scale";
    case OpKind::kGradientReversal: return "gradient_reversal";
    case OpKind::kSum: return "sum";
    case OpKind::kBinaryCrossEntropy: return "binary_cross_entropy";
  }
  return "unknown";
}

NodeId Graph::append(Node node) {
  if (node.name.empty()) throw GraphError("graph nodes need a name");
  if (names_.count(node.name)) throw GraphError("duplicate node name '" + node.name + "'");
  for (NodeId in : node.inputs) check_id(in, node.name);
  const NodeId id = nodes_.size();
  names_.emplace(node.name, id);
  nodes_.push_back(std::move(node));
  values_.emplace_back();
  evaluated_.push_back(0);
  masks_.emplace_back();
  reversal_reference_.emplace_back();
  has_forward_ = false;
  return id;
}

void Graph::check_id(NodeId id, const std::string& consumer) const {
  if (id >= nodes_.size())
    throw GraphError("node '" + consumer + "' consumes unknown node id " + std::to_string(id));
}

NodeId Graph::input(const std::string& name, Shape shape) {
  Node n;
  n.kind = OpKind::kInput;
  n.name = name;
  n.shape = std::move(shape);
  return append(std::move(n));
}

NodeId Graph::parameter(const std::string& name, Tensor value) {
  Node n;
  n.kind = OpKind::kParameter;
  n.name = name;
  n.shape = value.shape();
  const NodeId id = append(std::move(n));
  value.drop_grad();
  params_[name] = std::move(value);
  return id;
}

NodeId Graph::conv2d(const std::string& name, NodeId x, NodeId weights, NodeId bias,
                     const ConvSpec& spec) {
  spec.validate();
  Node n;
  n.kind = OpKind::kConv2d;
  n.name = name;
  n.inputs = {x, weights, bias};
  n.conv = spec;
  return append(std::move(n));
}

NodeId Graph::conv2d_transpose(const std::string& name, NodeId x, NodeId weights, NodeId bias,
                               const ConvSpec& spec) {
  spec.validate();
  Node n;
  n.kind = OpKind::kConvTranspose2d;
  n.name = name;
  n.inputs = {x, weights, bias};
  n.conv = spec;
  return append(std::move(n));
}

NodeId Graph::relu(const std::string& name, NodeId x) {
  return append(Node{OpKind::kRelu, name, {x}, {}, 0.0, {}});
}

NodeId Graph::sigmoid(const std::string& name, NodeId x) {
  return append(Node{OpKind::kSigmoid, name, {x}, {}, 0.0, {}});
}

NodeId Graph::dropout(const std::string& name, NodeId x, double rate) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw InvalidArgument("dropout rate must be in [0, 1), got " + std::to_string(rate));
  return append(Node{OpKind::kDropout, name, {x}, {}, rate, {}});
}

NodeId Graph::add(const std::string& name, NodeId a, NodeId b) {
  return append(Node{OpKind::kAdd, name, {a, b}, {}, 0.0, {}});
}

NodeId Graph::scale(const std::string& name, NodeId x, double factor) {
  return append(Node{OpKind::kScale, name, {x}, {}, factor, {}});
}

NodeId Graph::gradient_reversal(const std::string& name, NodeId x, const GrlSpec& spec) {
  if (!(spec.lambda >= 0.0)) throw InvalidArgument("gradient reversal lambda must be >= 0");
  return append(Node{OpKind::kGradientReversal, name, {x}, {}, spec.lambda, {}});
}

NodeId Graph::sum(const std::string& name, NodeId x) {
  return append(Node{OpKind::kSum, name, {x}, {}, 0.0, {}});
}

NodeId Graph::binary_cross_entropy(const std::string& name, NodeId pred, NodeId target) {
  return append(Node{OpKind::kBinaryCrossEntropy, name, {pred, target}, {}, 0.0, {}});
}

void Graph::set_output(const std::string& name, NodeId node) {
  check_id(node, "output '" + name + "'");
  outputs_[name] = node;
}

NodeId Graph::output(const std::string& name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) throw GraphError("graph has no output named '" + name + "'");
  return it->second;
}

NodeId Graph::find(const std::string& node_name) const {
  auto it = names_.find(node_name);
  if (it == names_.end()) throw GraphError("graph has no node named '" + node_name + "'");
  return it->second;
}

std::size_t Graph::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void Graph::set_reversal_lambda(double lambda) {
  if (!(lambda >= 0.0)) throw InvalidArgument("gradient reversal lambda must be >= 0");
  for (Node& n : nodes_)
    if (n.kind == OpKind::kGradientReversal) n.coefficient = lambda;
}

const Tensor& Graph::value(NodeId id) const {
  check_id(id, "value()");
  if (nodes_[id].kind == OpKind::kParameter) return params_.at(nodes_[id].name);
  if (!evaluated_[id]) throw GraphError("node '" + nodes_[id].name + "' has not been evaluated");
  return values_[id];
}

std::vector<char> Graph::closure(const std::vector<NodeId>& roots) const {
  std::vector<char> needed(nodes_.size(), 0);
  for (NodeId r : roots) needed[r] = 1;
  for (std::size_t i = nodes_.size(); i-- > 0;)
    if (needed[i])
      for (NodeId in : nodes_[i].inputs) needed[in] = 1;
  return needed;
}

Shape Graph::node_shape(const Node& node, const std::vector<Shape>& shapes) const {
  auto in = [&](std::size_t k) -> const Shape& { return shapes[node.inputs[k]]; };
  auto fail = [&](const std::string& why) -> ShapeError {
    return ShapeError("node '" + node.name + "' (" + op_name(node.kind) + "): " + why);
  };
  switch (node.kind) {
    case OpKind::kInput:
    case OpKind::kParameter:
      return node.shape;
    case OpKind::kConv2d:
    case OpKind::kConvTranspose2d: {
      const bool transpose = node.kind == OpKind::kConvTranspose2d;
      const Shape& x = in(0);
      if (x.size() != 3) throw fail("input must be [c,h,w], got " + to_string(x));
      if (x[0] != node.conv.in_channels)
        throw fail("expects " + std::to_string(node.conv.in_channels) +
                   " input channels, got " + std::to_string(x[0]));
      const Shape want_w =
          transpose ? node.conv.transpose_weight_shape() : node.conv.conv_weight_shape();
      if (in(1) != want_w)
        throw fail("weights expected " + to_string(want_w) + ", got " + to_string(in(1)));
      if (element_count(in(2)) != node.conv.out_channels)
        throw fail("bias must hold " + std::to_string(node.conv.out_channels) + " values");
      try {
        if (transpose)
          return {node.conv.out_channels, node.conv.transpose_out_h(x[1]),
                  node.conv.transpose_out_w(x[2])};
        return {node.conv.out_channels, node.conv.conv_out_h(x[1]), node.conv.conv_out_w(x[2])};
      } catch (const ShapeError& e) {
        throw fail(e.what());
      }
    }
    case OpKind::kRelu:
    case OpKind::kSigmoid:
    case OpKind::kDropout:
    case OpKind::kScale:
    case OpKind::kGradientReversal:
      return in(0);
    case OpKind::kAdd:
      if (in(0) != in(1))
        throw fail("operand shapes differ: " + to_string(in(0)) + " vs " + to_string(in(1)));
      return in(0);
    case OpKind::kSum:
      return {1};
    case OpKind::kBinaryCrossEntropy:
      if (in(0) != in(1))
        throw fail("prediction " + to_string(in(0)) + " vs target " + to_string(in(1)));
      return {1};
  }
  throw fail("unknown op");
}

std::map<std::string, Shape> Graph::infer_shapes(
    const std::map<std::string, Shape>& inputs) const {
  std::vector<NodeId> roots;
  for (const auto& [name, id] : outputs_) roots.push_back(id);
  const std::vector<char> needed = closure(roots);
  std::vector<Shape> shapes(nodes_.size());
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (!needed[id]) continue;
    const Node& n = nodes_[id];
    if (n.kind == OpKind::kInput) {
      auto it = inputs.find(n.name);
      if (it != inputs.end()) {
        if (!n.shape.empty() && n.shape != it->second)
          throw ShapeError("input '" + n.name + "' declared " + to_string(n.shape) +
                           ", given " + to_string(it->second));
        shapes[id] = it->second;
      } else if (!n.shape.empty()) {
        shapes[id] = n.shape;
      } else {
        throw GraphError("no shape known for input '" + n.name + "'");
      }
    } else {
      shapes[id] = node_shape(n, shapes);
    }
  }
  std::map<std::string, Shape> out;
  for (const auto& [name, id] : outputs_) out[name] = shapes[id];
  return out;
}

Tensor Graph::evaluate(NodeId id, const Bindings& bindings, const ForwardOptions& options) {
  const Node& n = nodes_[id];
  auto arg = [&](std::size_t k) -> const Tensor& { return value(n.inputs[k]); };
  auto wrap = [&](auto&& fn) -> Tensor {
    try {
      return fn();
    } catch (const ShapeError& e) {
      throw ShapeError("node '" + n.name + "' (" + op_name(n.kind) + "): " + e.what());
    }
  };
  switch (n.kind) {
    case OpKind::kInput: {
      auto it = bindings.find(n.name);
      if (it == bindings.end()) throw GraphError("input '" + n.name + "' is not bound");
      if (!n.shape.empty() && it->second.shape() != n.shape)
        throw ShapeError("input '" + n.name + "' expects shape " + to_string(n.shape) +
                         ", got " + to_string(it->second.shape()));
      Tensor t = it->second;
      t.drop_grad();
      return t;
    }
    case OpKind::kParameter:
      return {};
    case OpKind::kConv2d:
      return wrap([&] { return binadapt::conv2d(arg(0), n.conv, arg(1), arg(2)); });
    case OpKind::kConvTranspose2d:
      return wrap([&] { return binadapt::conv2d_transpose(arg(0), n.conv, arg(1), arg(2)); });
    case OpKind::kRelu:
      return binadapt::relu(arg(0));
    case OpKind::kSigmoid:
      return binadapt::sigmoid(arg(0));
    case OpKind::kDropout: {
      const Tensor& x = arg(0);
      if (options.mode == Mode::kInference || n.coefficient == 0.0) {
        masks_[id] = DropoutMask{};
        Tensor t = x;
        t.drop_grad();
        return t;
      }
      if (options.mode == Mode::kTraining) {
        Rng rng(mix_seed(options.seed, stable_hash(n.name)));
        masks_[id] = draw_dropout_mask(x.size(), n.coefficient, rng);
      } else if (masks_[id].keep.size() != x.size()) {
        throw GraphError("node '" + n.name + "': no frozen dropout mask to reuse");
      }
      return apply_dropout(x, masks_[id]);
    }
    case OpKind::kAdd:
      return wrap([&] {
        const Tensor& a = arg(0);
        const Tensor& b = arg(1);
        if (!a.same_shape(b))
          throw ShapeError("operand shapes differ: " + to_string(a.shape()) + " vs " +
                           to_string(b.shape()));
        Tensor out = a;
        out.drop_grad();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
        return out;
      });
    case OpKind::kScale: {
      Tensor out = arg(0);
      out.drop_grad();
      for (double& v : out.values()) v *= n.coefficient;
      return out;
    }
    case OpKind::kGradientReversal: {
      Tensor out = binadapt::gradient_reversal(arg(0), GrlSpec{n.coefficient});
      if (options.linearize_reversal) {
        const Tensor& ref = reversal_reference_[id];
        if (!ref.same_shape(out))
          throw GraphError("node '" + n.name + "': no captured reversal reference");
        for (std::size_t i = 0; i < out.size(); ++i)
          out[i] = ref[i] - n.coefficient * (out[i] - ref[i]);
      }
      return out;
    }
    case OpKind::kSum:
      return Tensor::scalar(accurate_sum(arg(0).values()));
    case OpKind::kBinaryCrossEntropy:
      return wrap([&] { return Tensor::scalar(bce_loss(arg(0), arg(1))); });
  }
  throw GraphError("unknown op in node '" + n.name + "'");
}

std::map<std::string, Tensor> Graph::forward(const Bindings& bindings,
                                             const ForwardOptions& options) {
  std::vector<NodeId> roots;
  std::vector<std::string> names = options.outputs;
  if (names.empty())
    for (const auto& [name, id] : outputs_) names.push_back(name);
  for (const auto& name : names) roots.push_back(output(name));
  if (roots.empty())
    for (NodeId i = 0; i < nodes_.size(); ++i) roots.push_back(i);

  const std::vector<char> needed = closure(roots);
  std::fill(evaluated_.begin(), evaluated_.end(), 0);
  has_forward_ = false;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (!needed[id]) continue;
    if (nodes_[id].kind == OpKind::kParameter) {
      evaluated_[id] = 1;
      continue;
    }
    values_[id] = evaluate(id, bindings, options);
    evaluated_[id] = 1;
  }
  has_forward_ = true;

  std::map<std::string, Tensor> result;
  for (const auto& name : names) {
    const Tensor& t = value(output(name));
    if (!t.all_finite()) throw Error("output '" + name + "' contains non-finite values");
    Tensor copy = t;
    copy.drop_grad();
    result.emplace(name, std::move(copy));
  }
  return result;
}

void Graph::capture_reversal_reference() {
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].kind != OpKind::kGradientReversal || !evaluated_[id]) continue;
    reversal_reference_[id] = value(nodes_[id].inputs[0]);
    reversal_reference_[id].drop_grad();
  }
}

std::vector<std::uint8_t> Graph::relu_pattern() const {
  std::vector<std::uint8_t> bits;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].kind != OpKind::kRelu || !evaluated_[id]) continue;
    for (double v : value(nodes_[id].inputs[0]).values()) bits.push_back(v > 0.0);
  }
  return bits;
}

void Graph::propagate(NodeId id) {
  const Node& n = nodes_[id];
  const std::span<const double> g = values_[id].grad();
  auto grad_of = [&](NodeId k) -> std::span<double> {
    if (nodes_[k].kind == OpKind::kParameter) return params_.at(nodes_[k].name).grad();
    if (nodes_[k].kind == OpKind::kInput) return {};
    return values_[k].grad();
  };
  switch (n.kind) {
    case OpKind::kInput:
    case OpKind::kParameter:
      return;
    case OpKind::kConv2d:
      conv2d_backward(value(n.inputs[0]), n.conv, value(n.inputs[1]), g, grad_of(n.inputs[0]),
                      grad_of(n.inputs[1]), grad_of(n.inputs[2]));
      return;
    case OpKind::kConvTranspose2d:
      conv2d_transpose_backward(value(n.inputs[0]), n.conv, value(n.inputs[1]), g,
                                grad_of(n.inputs[0]), grad_of(n.inputs[1]),
                                grad_of(n.inputs[2]));
      return;
    case OpKind::kRelu: {
      auto gx = grad_of(n.inputs[0]);
      if (gx.empty()) return;
      const auto x = value(n.inputs[0]).values();
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (x[i] > 0.0) gx[i] += g[i];
      return;
    }
    case OpKind::kSigmoid: {
      auto gx = grad_of(n.inputs[0]);
      if (gx.empty()) return;
      const auto y = values_[id].values();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      return;
    }
    case OpKind::kDropout: {
      auto gx = grad_of(n.inputs[0]);
      if (gx.empty()) return;
      const DropoutMask& mask = masks_[id];
      if (mask.keep.empty()) {
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
      } else {
        for (std::size_t i = 0; i < gx.size(); ++i)
          if (mask.keep[i]) gx[i] += g[i] * mask.scale;
      }
      return;
    }
    case OpKind::kAdd:
      for (NodeId k : n.inputs) {
        auto gx = grad_of(k);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
      }
      return;
    case OpKind::kScale: {
      auto gx = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.coefficient * g[i];
      return;
    }
    case OpKind::kGradientReversal: {
      auto gx = grad_of(n.inputs[0]);
      const double factor = -n.coefficient;
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * g[i];
      return;
    }
    case OpKind::kSum: {
      auto gx = grad_of(n.inputs[0]);
      for (double& v : gx) v += g[0];
      return;
    }
    case OpKind::kBinaryCrossEntropy: {
      auto gx = grad_of(n.inputs[0]);
      if (gx.empty()) return;
      const Tensor local = bce_loss_grad(value(n.inputs[0]), value(n.inputs[1]));
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * local[i];
      return;
    }
  }
}

GradientSet Graph::backward(NodeId loss) {
  check_id(loss, "backward()");
  if (!has_forward_ || !evaluated_[loss])
    throw GraphError("backward from '" + nodes_[loss].name + "' requires a forward pass first");
  if (value(loss).size() != 1)
    throw GraphError("backward needs a scalar loss; '" + nodes_[loss].name + "' has shape " +
                     to_string(value(loss).shape()));

  for (auto& [name, t] : params_) t.zero_grad();
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const OpKind k = nodes_[id].kind;
    if (evaluated_[id] && k != OpKind::kParameter && k != OpKind::kInput) values_[id].zero_grad();
  }
  if (nodes_[loss].kind == OpKind::kParameter)
    params_.at(nodes_[loss].name).grad()[0] = 1.0;
  else
    values_[loss].grad()[0] = 1.0;

  for (NodeId id = loss + 1; id-- > 0;) {
    if (!evaluated_[id]) continue;
    propagate(id);
  }

  GradientSet grads;
  for (auto& [name, t] : params_) {
    auto g = t.grad();
    grads.emplace(name, Tensor(t.shape(), std::vector<double>(g.begin(), g.end())));
  }
  return grads;
}

namespace {

// A scalar loss built from sum / cross-entropy reductions combined by add and
// scale nodes is a weighted sum of per-element terms.
struct WeightedTerms {
  double weight = 1.0;
  std::vector<double> terms;
};

bool collect_terms(const Graph& g, NodeId id, double weight, std::vector<WeightedTerms>& out) {
  const Node& n = g.node(id);
  switch (n.kind) {
    case OpKind::kAdd:
      return collect_terms(g, n.inputs[0], weight, out) &&
             collect_terms(g, n.inputs[1], weight, out);
    case OpKind::kScale:
      return collect_terms(g, n.inputs[0], weight * n.coefficient, out);
    case OpKind::kSum: {
      const auto values = g.value(n.inputs[0]).values();
      out.push_back({weight, std::vector<double>(values.begin(), values.end())});
      return true;
    }
    case OpKind::kBinaryCrossEntropy: {
      const Tensor& pred = g.value(n.inputs[0]);
      out.push_back({weight / static_cast<double>(pred.size()),
                     bce_terms(pred, g.value(n.inputs[1]))});
      return true;
    }
    default:
      return false;
  }
}

// loss(up) - loss(down) from the per-element terms. Terms the perturbation
// does not reach cancel exactly, so the difference is not limited by the
// rounding of the total loss.
double term_difference(const std::vector<WeightedTerms>& up,
                       const std::vector<WeightedTerms>& down) {
  std::vector<double> parts;
  for (std::size_t k = 0; k < up.size(); ++k) {
    std::vector<double> diff(up[k].terms.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = up[k].terms[i] - down[k].terms[i];
    parts.push_back(up[k].weight * accurate_sum(diff));
  }
  return accurate_sum(parts);
}

}  // namespace

GradCheckResult grad_check(Graph& graph, const Bindings& bindings,
                           const std::string& loss_output, const std::string& parameter,
                           double epsilon, ForwardOptions options) {
  if (!(epsilon > 0.0 && epsilon <= 1e-3))
    throw InvalidArgument("grad_check epsilon must be in (0, 1e-3]");
  auto param_it = graph.parameters().find(parameter);
  if (param_it == graph.parameters().end())
    throw InvalidArgument("grad_check: unknown parameter '" + parameter + "'");

  options.outputs = {loss_output};
  options.linearize_reversal = false;
  const auto base = graph.forward(bindings, options);
  if (base.at(loss_output).size() != 1)
    throw GraphError("grad_check needs a scalar loss; '" + loss_output + "' is not");
  graph.capture_reversal_reference();
  const std::vector<std::uint8_t> pattern = graph.relu_pattern();
  const Tensor analytic = graph.backward(loss_output).at(parameter);

  ForwardOptions probe = options;
  if (probe.mode == Mode::kTraining) probe.mode = Mode::kTrainingFrozenMasks;
  probe.linearize_reversal = true;

  std::vector<WeightedTerms> scratch;
  const bool decomposable = collect_terms(graph, graph.output(loss_output), 1.0, scratch);
  auto eval = [&](bool& kink, std::vector<WeightedTerms>& terms) {
    const double loss = graph.forward(bindings, probe).at(loss_output)[0];
    kink = kink || graph.relu_pattern() != pattern;
    terms.clear();
    if (decomposable) collect_terms(graph, graph.output(loss_output), 1.0, terms);
    return loss;
  };

  GradCheckResult result;
  Tensor& p = graph.parameters().at(parameter);
  constexpr int kMaxRetries = 4;
  std::vector<WeightedTerms> terms_up, terms_down;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double original = p[i];
    double step = epsilon;
    double numeric = 0.0;
    for (int attempt = 0;; ++attempt) {
      bool kink = false;
      const double up = original + step;
      const double down = original - step;
      p[i] = up;
      const double loss_up = eval(kink, terms_up);
      p[i] = down;
      const double loss_down = eval(kink, terms_down);
      p[i] = original;
      const double delta =
          decomposable ? term_difference(terms_up, terms_down) : loss_up - loss_down;
      numeric = delta / (up - down);
      if (!kink || attempt == kMaxRetries) break;
      ++result.kink_retries;
      step *= 0.1;
    }
    const double a = analytic[i];
    const double err =
        std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    if (i == 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
      result.analytic = a;
      result.numeric = numeric;
    }
  }
  // Leave the graph holding the unperturbed activations.
  graph.forward(bindings, probe);
  return result;
}

}  // namespace binadapt
