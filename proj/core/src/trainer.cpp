#include "binadapt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "binadapt/error.hpp"
#include "binadapt/metrics.hpp"
#include "binadapt/parallel.hpp"
#include "binadapt/patches.hpp"
#include "binadapt/rng.hpp"

namespace binadapt {
namespace {

// Independent random streams per training run.
enum Stream : std::uint64_t {
  kInitStream = 1,
  kSourceDraw = 2,
  kSourceDropout = 3,
  kTargetDraw = 4,
  kTargetDropout = 5,
};

struct PatchSample {
  Tensor image;
  Tensor truth;
};

std::vector<PatchSample> source_patches(const Dataset& ds, const SaeConfig& cfg) {
  std::vector<PatchSample> out;
  for (std::size_t i : ds.indices(Partition::kTrain)) {
    PatchGrid grid = split_patches(ds.pages[i], cfg.patch_h, cfg.patch_w);
    for (std::size_t r = 0; r < grid.rows; ++r)
      for (std::size_t c = 0; c < grid.cols; ++c)
        out.push_back({std::move(grid.patches[r * grid.cols + c]),
                       mask_patch(ds.ground_truth[i], r, c, cfg.patch_h, cfg.patch_w)});
  }
  return out;
}

std::vector<Tensor> target_patches(const Dataset& ds, const SaeConfig& cfg) {
  std::vector<Tensor> out;
  for (const Page& page : ds.pages) {
    PatchGrid grid = split_patches(page, cfg.patch_h, cfg.patch_w);
    for (Tensor& t : grid.patches) out.push_back(std::move(t));
  }
  return out;
}

void check_channels(const Dataset& ds, const SaeConfig& cfg) {
  for (const Page& p : ds.pages)
    if (p.channels != cfg.channels)
      throw ShapeError("dataset page has " + std::to_string(p.channels) +
                       " channels, model expects " + std::to_string(cfg.channels));
}

struct Job {
  const Tensor* image;
  const Tensor* truth;  // null for target patches
  std::uint64_t dropout_seed;
};

struct JobResult {
  GradientSet grads;
  double bin_loss = 0.0;
  double domain_loss = 0.0;
};

class Loop {
 public:
  Loop(Model model, const Dataset& source, const Dataset* target, const TrainConfig& cfg)
      : cfg_(cfg),
        master_(std::move(model)),
        optimizer_(cfg.optimizer),
        source_draw_(mix_seed(cfg.seed, kSourceDraw)),
        source_dropout_(mix_seed(cfg.seed, kSourceDropout)),
        target_draw_(mix_seed(cfg.seed, kTargetDraw)),
        target_dropout_(mix_seed(cfg.seed, kTargetDropout)) {
    const SaeConfig& sae = master_.sae_config();
    train_ = source_patches(source, sae);
    if (target) targets_ = target_patches(*target, sae);
    const std::size_t per_step = cfg.batch * (target ? 2 : 1);
    const std::size_t budget = cfg.threads ? cfg.threads : thread_budget();
    workers_ = std::max<std::size_t>(1, std::min(budget, per_step));
    for (std::size_t w = 1; w < workers_; ++w) copies_.push_back(master_);
    zeros_ = Tensor({1, sae.patch_h, sae.patch_w}, 0.0);
    ones_ = Tensor({1, sae.patch_h, sae.patch_w}, 1.0);
    val_idx_ = source.indices(Partition::kValidation);
    for (std::size_t i : val_idx_) {
      val_pages_.push_back(source.pages[i]);
      val_truth_.push_back(source.ground_truth[i]);
    }
  }

  TrainedBinarizer run() {
    const bool adversarial = !targets_.empty();
    const std::size_t steps = (train_.size() + cfg_.batch - 1) / cfg_.batch;
    TrainedBinarizer result{master_, 0.5, -1.0, 0, {}};
    std::size_t global_step = 0;

    for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
      const double lambda = adversarial ? cfg_.lambda_at(epoch) : 0.0;
      if (adversarial) set_lambda(lambda);
      double bin_sum = 0.0, dom_sum = 0.0;
      for (std::size_t s = 0; s < steps; ++s) {
        const auto [bin, dom] = step(adversarial);
        bin_sum += bin;
        dom_sum += dom;
        if (cfg_.on_step) cfg_.on_step(global_step, master_);
        ++global_step;
      }

      const SweepResult sweep = sweep_threshold(master_, val_pages_, val_truth_, cfg_.sweep_step);
      EpochRecord rec;
      rec.epoch = epoch;
      rec.bin_loss = bin_sum / static_cast<double>(steps);
      rec.domain_loss = adversarial ? dom_sum / static_cast<double>(steps) : 0.0;
      rec.lambda = lambda;
      rec.val_f1 = sweep.f1;
      rec.threshold = sweep.threshold;
      result.history.push_back(rec);
      if (sweep.f1 > result.validation_f1) {
        result.validation_f1 = sweep.f1;
        result.threshold = sweep.threshold;
        result.best_epoch = epoch;
        result.model = master_;
      }
    }
    return result;
  }

 private:
  void set_lambda(double lambda) {
    master_.set_lambda(lambda);
    for (Model& m : copies_) m.set_lambda(lambda);
  }

  Model& worker(std::size_t w) { return w == 0 ? master_ : copies_[w - 1]; }

  JobResult compute(Model& model, const Job& job) const {
    Bindings b;
    b.emplace(io::kImage, *job.image);
    ForwardOptions opt;
    opt.mode = Mode::kTraining;
    opt.seed = job.dropout_seed;
    JobResult r;
    const bool adversarial = model.kind() == ModelKind::kBinDann;
    if (job.truth) {
      b.emplace(io::kTruth, *job.truth);
      if (adversarial) b.emplace(io::kDomainLabel, zeros_);
      opt.outputs = {io::kLoss};
      if (adversarial) opt.outputs.push_back(io::kDomainLoss);
      opt.outputs.push_back(io::kBinLoss);
      const auto out = model.graph().forward(b, opt);
      r.bin_loss = out.at(io::kBinLoss)[0];
      if (adversarial) r.domain_loss = out.at(io::kDomainLoss)[0];
      r.grads = model.graph().backward(io::kLoss);
    } else {
      b.emplace(io::kDomainLabel, ones_);
      opt.outputs = {io::kDomainTerm, io::kDomainLoss};
      const auto out = model.graph().forward(b, opt);
      r.domain_loss = out.at(io::kDomainLoss)[0];
      r.grads = model.graph().backward(io::kDomainTerm);
    }
    return r;
  }

  std::pair<double, double> step(bool adversarial) {
    std::vector<Job> jobs;
    jobs.reserve(cfg_.batch * 2);
    for (std::size_t i = 0; i < cfg_.batch; ++i) {
      const PatchSample& s = train_[source_draw_.index(train_.size())];
      jobs.push_back({&s.image, &s.truth, source_dropout_.next()});
    }
    if (adversarial)
      for (std::size_t i = 0; i < cfg_.batch; ++i) {
        const Tensor& t = targets_[target_draw_.index(targets_.size())];
        jobs.push_back({&t, nullptr, target_dropout_.next()});
      }

    for (Model& m : copies_) m.graph().parameters() = master_.graph().parameters();
    std::vector<JobResult> results(jobs.size());
    parallel_for(jobs.size(), workers_, [&](std::size_t i, std::size_t w) {
      results[i] = compute(worker(w), jobs[i]);
    });

    // Fixed summation order keeps the update independent of thread count.
    GradientSet total = std::move(results[0].grads);
    for (std::size_t i = 1; i < results.size(); ++i)
      for (auto& [name, g] : results[i].grads) {
        auto dst = total.at(name).values();
        const auto src = g.values();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    const double inv_batch = 1.0 / static_cast<double>(cfg_.batch);
    for (auto& [name, g] : total)
      for (double& v : g.values()) v *= inv_batch;
    optimizer_.step(master_.graph().parameters(), total);

    double bin = 0.0, dom = 0.0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      bin += results[i].bin_loss;
      dom += results[i].domain_loss;
    }
    return {bin * inv_batch, dom / static_cast<double>(results.size())};
  }

  const TrainConfig& cfg_;
  Model master_;
  std::vector<Model> copies_;
  std::size_t workers_ = 1;
  Optimizer optimizer_;
  Rng source_draw_, source_dropout_, target_draw_, target_dropout_;
  std::vector<PatchSample> train_;
  std::vector<Tensor> targets_;
  Tensor zeros_, ones_;
  std::vector<std::size_t> val_idx_;
  std::vector<Page> val_pages_;
  std::vector<BinaryMask> val_truth_;
};

void check_source(const Dataset& source) {
  source.validate();
  if (source.role != DomainRole::kSource) throw InvalidArgument("training needs a source dataset");
  if (source.indices(Partition::kTrain).empty())
    throw InvalidArgument("source dataset has an empty training partition");
  if (source.indices(Partition::kValidation).empty())
    throw InvalidArgument("source dataset has an empty validation partition");
}

}  // namespace

double TrainConfig::lambda_at(std::size_t epoch) const {
  if (fixed_lambda) return *fixed_lambda;
  return lambda0 + lambda_increment * static_cast<double>(epoch);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (batch < 1) throw InvalidArgument("batch size must be >= 1");
  if (!(sweep_step > 0.0 && sweep_step < 1.0))
    throw InvalidArgument("threshold sweep step must be in (0, 1)");
  if (!(lambda0 >= 0.0) || !(lambda_increment >= 0.0) || (fixed_lambda && !(*fixed_lambda >= 0.0)))
    throw InvalidArgument("lambda schedule must be non-negative");
}

std::vector<double> threshold_grid(double step) {
  if (!(step > 0.0 && step < 1.0)) throw InvalidArgument("threshold sweep step must be in (0, 1)");
  std::vector<double> grid;
  for (std::size_t k = 1;; ++k) {
    const double th = static_cast<double>(k) * step;
    if (th >= 1.0 - 1e-9) break;
    grid.push_back(th);
  }
  return grid;
}

SweepResult sweep_threshold(const std::vector<ProbabilityMap>& maps,
                            const std::vector<BinaryMask>& truth, double step) {
  if (maps.empty() || maps.size() != truth.size())
    throw InvalidArgument("threshold sweep needs one truth mask per non-empty map list");
  SweepResult result;
  for (double th : threshold_grid(step)) {
    Confusion c;
    for (std::size_t i = 0; i < maps.size(); ++i) {
      if (maps[i].width != truth[i].width || maps[i].height != truth[i].height)
        throw ShapeError("probability map and truth sizes differ");
      for (std::size_t k = 0; k < maps[i].values.size(); ++k) {
        const bool p = maps[i].values[k] >= th;
        const bool t = truth[i].bits[k] != 0;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
      }
    }
    const double score = f1(c);
    result.curve.emplace_back(th, score);
    if (result.curve.size() == 1 || score > result.f1) {
      result.f1 = score;
      result.threshold = th;
    }
  }
  return result;
}

SweepResult sweep_threshold(const Model& model, const std::vector<Page>& pages,
                            const std::vector<BinaryMask>& truth, double step) {
  return sweep_threshold(predict_prob_maps(model, pages), truth, step);
}

BinaryMask binarize(const ProbabilityMap& map, double threshold) {
  BinaryMask mask(map.width, map.height);
  for (std::size_t i = 0; i < map.values.size(); ++i) mask.bits[i] = map.values[i] >= threshold;
  return mask;
}

TrainedBinarizer train_sae(const Dataset& source, const SaeConfig& model, const TrainConfig& cfg) {
  cfg.validate();
  check_source(source);
  check_channels(source, model);
  Rng init(mix_seed(cfg.seed, kInitStream));
  Loop loop(build_sae(model, init), source, nullptr, cfg);
  return loop.run();
}

TrainedBinarizer train_bindann(const Dataset& source, const Dataset& target,
                               const SaeConfig& model, const TrainConfig& cfg) {
  cfg.validate();
  check_source(source);
  target.validate();
  if (target.pages.empty()) throw InvalidArgument("domain adaptation needs target pages");
  check_channels(source, model);
  check_channels(target, model);
  Rng init(mix_seed(cfg.seed, kInitStream));
  BinDannConfig dann{model, cfg.lambda0, cfg.lambda_increment};
  Loop loop(build_bindann(dann, init), source, &target, cfg);
  return loop.run();
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,bin_loss,domain_loss,lambda,val_f1,th_s\n";
  char line[256];
  for (const EpochRecord& r : history) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.bin_loss,
                  r.domain_loss, r.lambda, r.val_f1, r.threshold);
    out << line;
  }
}

}  // namespace binadapt
