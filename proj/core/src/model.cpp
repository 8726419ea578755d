#include "binadapt/model.hpp"

#include <cmath>

#include "binadapt/error.hpp"
#include "binadapt/parallel.hpp"
#include "binadapt/patches.hpp"

namespace binadapt {
namespace {

constexpr double kModelRecordVersion = 1.0;

Tensor uniform_tensor(const Shape& shape, double bound, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

// He-uniform for ReLU layers; the sigmoid output layer uses LeCun-uniform.
double init_bound(std::size_t fan_in, bool relu) {
  return std::sqrt((relu ? 6.0 : 3.0) / static_cast<double>(fan_in));
}

struct Builder {
  Graph& graph;
  const SaeConfig& cfg;
  Rng& rng;

  ConvSpec strided(std::size_t in, std::size_t out) const {
    ConvSpec s;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel_h = cfg.kernel_h;
    s.kernel_w = cfg.kernel_w;
    s.stride_h = cfg.stride_h;
    s.stride_w = cfg.stride_w;
    const std::size_t th = cfg.kernel_h - cfg.stride_h, tw = cfg.kernel_w - cfg.stride_w;
    s.pad_top = th / 2;
    s.pad_bottom = th - th / 2;
    s.pad_left = tw / 2;
    s.pad_right = tw - tw / 2;
    return s;
  }

  ConvSpec same(std::size_t in, std::size_t out) const {
    ConvSpec s;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel_h = cfg.kernel_h;
    s.kernel_w = cfg.kernel_w;
    s.pad_top = (cfg.kernel_h - 1) / 2;
    s.pad_bottom = cfg.kernel_h - 1 - s.pad_top;
    s.pad_left = (cfg.kernel_w - 1) / 2;
    s.pad_right = cfg.kernel_w - 1 - s.pad_left;
    return s;
  }

  NodeId block(const std::string& name, NodeId x, const ConvSpec& spec, bool transpose) {
    const Shape wshape = transpose ? spec.transpose_weight_shape() : spec.conv_weight_shape();
    const std::size_t fan_in = spec.in_channels * spec.kernel_h * spec.kernel_w;
    const NodeId w = graph.parameter(name + ".weight", uniform_tensor(wshape, init_bound(fan_in, true), rng));
    const NodeId b = graph.parameter(name + ".bias", Tensor({spec.out_channels}));
    const NodeId conv = transpose ? graph.conv2d_transpose(name + ".tconv", x, w, b, spec)
                                  : graph.conv2d(name + ".conv", x, w, b, spec);
    const NodeId act = graph.relu(name + ".relu", conv);
    return graph.dropout(name + ".drop", act, cfg.dropout_rate);
  }

  NodeId head(const std::string& name, NodeId x) {
    const ConvSpec spec = same(cfg.filters, 1);
    const std::size_t fan_in = spec.in_channels * spec.kernel_h * spec.kernel_w;
    const NodeId w = graph.parameter(name + ".weight",
                                     uniform_tensor(spec.conv_weight_shape(), init_bound(fan_in, false), rng));
    const NodeId b = graph.parameter(name + ".bias", Tensor({1}));
    const NodeId conv = graph.conv2d(name + ".conv", x, w, b, spec);
    return graph.sigmoid(name + ".sigmoid", conv);
  }
};

struct SaeNodes {
  NodeId image;
  NodeId tap;  // activation entering the last decoder block
  NodeId prob;
};

SaeNodes build_trunk(Graph& g, const SaeConfig& cfg, Rng& rng) {
  Builder b{g, cfg, rng};
  SaeNodes nodes{};
  nodes.image = g.input(io::kImage, {cfg.channels, cfg.patch_h, cfg.patch_w});

  std::vector<NodeId> encoded;
  NodeId x = nodes.image;
  for (std::size_t i = 1; i <= cfg.depth; ++i) {
    x = b.block("enc" + std::to_string(i), x, b.strided(i == 1 ? cfg.channels : cfg.filters, cfg.filters), false);
    encoded.push_back(x);
  }
  for (std::size_t j = 1; j <= cfg.depth; ++j) {
    if (j == cfg.depth) nodes.tap = x;
    const std::string name = "dec" + std::to_string(j);
    ConvSpec spec = b.strided(cfg.filters, cfg.filters);
    x = b.block(name, x, spec, true);
    // Skip from the encoder block whose output has this resolution.
    if (j < cfg.depth) x = g.add(name + ".skip", x, encoded[cfg.depth - 1 - j]);
  }
  nodes.prob = b.head("out", x);
  g.set_output(io::kProbability, nodes.prob);

  const NodeId truth = g.input(io::kTruth, {1, cfg.patch_h, cfg.patch_w});
  const NodeId loss = g.binary_cross_entropy(io::kBinLoss, nodes.prob, truth);
  g.set_output(io::kBinLoss, loss);
  return nodes;
}

std::vector<double> encode_config(ModelKind kind, const BinDannConfig& d) {
  const SaeConfig& s = d.sae;
  return {kModelRecordVersion,
          kind == ModelKind::kSae ? 0.0 : 1.0,
          static_cast<double>(s.depth),
          static_cast<double>(s.filters),
          static_cast<double>(s.kernel_h),
          static_cast<double>(s.kernel_w),
          static_cast<double>(s.stride_h),
          static_cast<double>(s.stride_w),
          s.dropout_rate,
          static_cast<double>(s.patch_h),
          static_cast<double>(s.patch_w),
          static_cast<double>(s.channels),
          d.lambda0,
          d.lambda_increment};
}

}  // namespace

SaeConfig SaeConfig::full_scale() {
  SaeConfig c;
  c.depth = 6;
  c.filters = 64;
  c.patch_h = c.patch_w = 256;
  return c;
}

void SaeConfig::validate() const {
  if (depth < 1) throw InvalidArgument("SAE depth must be >= 1");
  if (filters < 1 || channels < 1) throw InvalidArgument("filters and channels must be >= 1");
  if (kernel_h < stride_h || kernel_w < stride_w || stride_h < 1 || stride_w < 1)
    throw InvalidArgument("kernel must be at least as large as the stride");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw InvalidArgument("dropout rate must be in [0, 1)");
  std::size_t fh = 1, fw = 1;
  for (std::size_t i = 0; i < depth; ++i) {
    fh *= stride_h;
    fw *= stride_w;
  }
  if (patch_h == 0 || patch_w == 0 || patch_h % fh != 0 || patch_w % fw != 0)
    throw InvalidArgument("patch " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
                          " is not divisible by stride^depth = " + std::to_string(fh) + "x" +
                          std::to_string(fw));
}

void BinDannConfig::validate() const {
  sae.validate();
  if (!(lambda0 >= 0.0) || !(lambda_increment >= 0.0))
    throw InvalidArgument("lambda schedule must be non-negative");
}

std::size_t Model::parameter_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& [name, t] : graph_.parameters())
    if (std::string_view(name).starts_with(prefix)) n += t.size();
  return n;
}

std::vector<std::string> Model::replicated_tail_prefixes() const {
  return {"dec" + std::to_string(dann_.sae.depth) + ".", "out."};
}

void Model::set_lambda(double lambda) { graph_.set_reversal_lambda(lambda); }

Shape Model::output_shape(const std::string& output) const {
  return graph_.infer_shapes({}).at(output);
}

Model build_sae(const SaeConfig& config, Rng& rng) {
  config.validate();
  Model m;
  m.kind_ = ModelKind::kSae;
  m.dann_.sae = config;
  build_trunk(m.graph_, config, rng);
  Graph& g = m.graph_;
  g.set_output(io::kLoss, g.output(io::kBinLoss));
  return m;
}

Model build_bindann(const BinDannConfig& config, Rng& rng) {
  config.validate();
  Model m;
  m.kind_ = ModelKind::kBinDann;
  m.dann_ = config;
  Graph& g = m.graph_;
  const SaeConfig& cfg = config.sae;
  // Trunk first so its initial weights match build_sae for the same rng.
  const SaeNodes trunk = build_trunk(g, cfg, rng);

  Builder b{g, cfg, rng};
  const NodeId reversed = g.gradient_reversal("domain.grl", trunk.tap, GrlSpec{config.lambda0});
  const std::string last = "domain.dec" + std::to_string(cfg.depth);
  const NodeId x = b.block(last, reversed, b.strided(cfg.filters, cfg.filters), true);
  const NodeId domain = b.head("domain.out", x);
  g.set_output(io::kDomain, domain);

  const NodeId label = g.input(io::kDomainLabel, {1, cfg.patch_h, cfg.patch_w});
  const NodeId domain_loss = g.binary_cross_entropy(io::kDomainLoss, domain, label);
  g.set_output(io::kDomainLoss, domain_loss);
  const NodeId term = g.scale(io::kDomainTerm, domain_loss, kDomainLossWeight);
  g.set_output(io::kDomainTerm, term);
  const NodeId total = g.add(io::kLoss, g.output(io::kBinLoss), term);
  g.set_output(io::kLoss, total);
  return m;
}

ProbabilityMap predict_prob_map(Model& model, const Page& page) {
  const SaeConfig& cfg = model.sae_config();
  if (page.channels != cfg.channels)
    throw ShapeError("model expects " + std::to_string(cfg.channels) + "-channel pages, got " +
                     std::to_string(page.channels));
  PatchGrid grid = split_patches(page, cfg.patch_h, cfg.patch_w);
  ForwardOptions options;
  options.mode = Mode::kInference;
  options.outputs = {io::kProbability};
  for (Tensor& patch : grid.patches) {
    Bindings bindings;
    bindings.emplace(io::kImage, std::move(patch));
    patch = std::move(model.graph().forward(bindings, options).at(io::kProbability));
  }
  grid.channels = 1;
  return assemble(grid);
}

std::vector<ProbabilityMap> predict_prob_maps(const Model& model, const std::vector<Page>& pages) {
  std::vector<ProbabilityMap> out(pages.size());
  const std::size_t workers = std::min(thread_budget(), pages.size());
  std::vector<Model> copies(std::max<std::size_t>(workers, 1), model);
  parallel_for(pages.size(), workers, [&](std::size_t i, std::size_t w) {
    out[i] = predict_prob_map(copies[w], pages[i]);
  });
  return out;
}

NamedTensors model_records(const Model& model, double threshold) {
  NamedTensors records;
  const auto cfg = encode_config(model.kind(), model.dann_config());
  records.emplace_back("@model", Tensor({cfg.size()}, cfg));
  records.emplace_back("@threshold", Tensor::scalar(threshold));
  for (auto& rec : to_named(model.graph().parameters())) records.push_back(std::move(rec));
  return records;
}

Model model_from_records(const NamedTensors& records, double* threshold) {
  if (records.size() < 2 || records[0].first != "@model" || records[1].first != "@threshold")
    throw InvalidArgument("checkpoint lacks the @model/@threshold header records");
  const Tensor& c = records[0].second;
  if (c.size() != 14 || c[0] != kModelRecordVersion)
    throw InvalidArgument("unsupported @model record");
  auto as_size = [](double v) { return static_cast<std::size_t>(std::llround(v)); };
  BinDannConfig d;
  d.sae.depth = as_size(c[2]);
  d.sae.filters = as_size(c[3]);
  d.sae.kernel_h = as_size(c[4]);
  d.sae.kernel_w = as_size(c[5]);
  d.sae.stride_h = as_size(c[6]);
  d.sae.stride_w = as_size(c[7]);
  d.sae.dropout_rate = c[8];
  d.sae.patch_h = as_size(c[9]);
  d.sae.patch_w = as_size(c[10]);
  d.sae.channels = as_size(c[11]);
  d.lambda0 = c[12];
  d.lambda_increment = c[13];

  Rng rng(0);
  Model m = c[1] == 0.0 ? build_sae(d.sae, rng) : build_bindann(d, rng);
  ParameterSet& params = m.graph().parameters();
  std::size_t loaded = 0;
  for (std::size_t i = 2; i < records.size(); ++i) {
    const auto& [name, t] = records[i];
    auto it = params.find(name);
    if (it == params.end()) throw InvalidArgument("checkpoint has unknown parameter '" + name + "'");
    if (!it->second.same_shape(t))
      throw ShapeError("checkpoint parameter '" + name + "' has shape " + to_string(t.shape()) +
                       ", model expects " + to_string(it->second.shape()));
    it->second = t;
    ++loaded;
  }
  if (loaded != params.size())
    throw InvalidArgument("checkpoint holds " + std::to_string(loaded) + " of " +
                          std::to_string(params.size()) + " parameters");
  if (threshold) *threshold = records[1].second[0];
  return m;
}

void save_model(const std::filesystem::path& path, const Model& model, double threshold) {
  save_checkpoint(path, model_records(model, threshold));
}

Model load_model(const std::filesystem::path& path, double* threshold) {
  return model_from_records(load_checkpoint(path), threshold);
}

}  // namespace binadapt
