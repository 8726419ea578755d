#include "binadapt/cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "binadapt/checkpoint.hpp"
#include "binadapt/error.hpp"
#include "binadapt/metrics.hpp"
#include "binadapt/pgm.hpp"
#include "binadapt/rng.hpp"
#include "binadapt/synthetic.hpp"

#ifndef BINADAPT_VERSION
#define BINADAPT_VERSION "0.0.0"
#endif

namespace binadapt::cli {
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ConfigError("invalid value for " + key + ": '" + text + "'");
  return value;
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_relative() && !base.empty() ? base / p : p;
}

// Shortest round-trip form.
std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const fs::path&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto path_key = [&](const char* key, fs::path ExperimentConfig::*field) {
      t[key] = [field](ExperimentConfig& c, const std::string& v, const fs::path& base) {
        c.*field = resolve(base, v);
      };
    };
    auto size_key = [&](const char* key, std::size_t ExperimentConfig::*field) {
      t[key] = [field, key](ExperimentConfig& c, const std::string& v, const fs::path&) {
        c.*field = parse_number<std::size_t>(key, v);
      };
    };
    auto real_key = [&](const char* key, double ExperimentConfig::*field) {
      t[key] = [field, key](ExperimentConfig& c, const std::string& v, const fs::path&) {
        c.*field = parse_number<double>(key, v);
      };
    };
    path_key("source_dir", &ExperimentConfig::source_dir);
    path_key("target_dir", &ExperimentConfig::target_dir);
    path_key("out_dir", &ExperimentConfig::out_dir);
    size_key("patch_h", &ExperimentConfig::patch_h);
    size_key("patch_w", &ExperimentConfig::patch_w);
    size_key("depth", &ExperimentConfig::depth);
    size_key("filters", &ExperimentConfig::filters);
    size_key("epochs", &ExperimentConfig::epochs);
    size_key("batch", &ExperimentConfig::batch);
    real_key("dropout", &ExperimentConfig::dropout);
    real_key("lr", &ExperimentConfig::lr);
    real_key("lambda0", &ExperimentConfig::lambda0);
    real_key("lambda_inc", &ExperimentConfig::lambda_inc);
    real_key("h_prec", &ExperimentConfig::h_prec);
    real_key("rho_th", &ExperimentConfig::rho_th);
    real_key("sweep_step", &ExperimentConfig::sweep_step);
    real_key("validation_fraction", &ExperimentConfig::validation_fraction);
    t["seed"] = [](ExperimentConfig& c, const std::string& v, const fs::path&) {
      c.seed = parse_number<std::uint64_t>("seed", v);
    };
    t["optimizer"] = [](ExperimentConfig& c, const std::string& v, const fs::path&) {
      c.optimizer = v;
    };
    return t;
  }();
  return table;
}

void require_dir(const fs::path& dir, const char* key) {
  if (dir.empty()) throw ConfigError(std::string(key) + " is not set");
}

void ensure_out_dir(const fs::path& dir) {
  require_dir(dir, "out_dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                 text.size()));
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

// The manifest hash covers everything except the timestamp.
void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                    ordered_json extra) {
  ordered_json m;
  m["command"] = command;
  m["config_hash"] = config_hash(cfg);
  m["seed"] = cfg.seed;
  ordered_json config;
  std::istringstream lines(canonical_config(cfg));
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  m["config"] = config;
  m["versions"] = {{"binadapt", BINADAPT_VERSION},
                   {"checkpoint_format", kCheckpointMagic},
                   {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  for (auto& [key, value] : extra.items()) m[key] = value;
  m["manifest_hash"] = [&] {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(stable_hash(m.dump())));
    return std::string(buf);
  }();
  m["created_at"] = timestamp();
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  write_history_csv(out, history);
  return out.str();
}

std::string histogram_csv(const DomainHistogram& h) {
  std::ostringstream out;
  write_histogram_csv(out, h);
  return out.str();
}

Dataset load_source(const ExperimentConfig& cfg) {
  require_dir(cfg.source_dir, "source_dir");
  return load_dataset(cfg.source_dir, DomainRole::kSource, cfg.validation_fraction, cfg.seed);
}

Dataset load_target(const ExperimentConfig& cfg) {
  require_dir(cfg.target_dir, "target_dir");
  return load_dataset(cfg.target_dir, DomainRole::kTarget, 0.0, cfg.seed);
}

std::string score_row(const std::string& stem, const Confusion& c) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%llu,%llu,%llu,%llu\n", stem.c_str(), f1(c),
                precision(c), recall(c), static_cast<unsigned long long>(c.tp),
                static_cast<unsigned long long>(c.fp), static_cast<unsigned long long>(c.fn),
                static_cast<unsigned long long>(c.tn));
  return buf;
}

}  // namespace

SaeConfig ExperimentConfig::model() const {
  SaeConfig m;
  m.depth = depth;
  m.filters = filters;
  m.dropout_rate = dropout;
  m.patch_h = patch_h;
  m.patch_w = patch_w;
  return m;
}

TrainConfig ExperimentConfig::training() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch = batch;
  t.sweep_step = sweep_step;
  t.seed = seed;
  t.optimizer.kind = parse_optimizer_kind(optimizer);
  t.optimizer.learning_rate = lr;
  t.lambda0 = lambda0;
  t.lambda_increment = lambda_inc;
  return t;
}

AutoBinConfig ExperimentConfig::autobin() const {
  AutoBinConfig a;
  a.model = model();
  a.train = training();
  a.h_prec = h_prec;
  a.rho_th = rho_th;
  return a;
}

void ExperimentConfig::validate() const {
  try {
    model().validate();
    training().validate();
    bin_count(h_prec);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(rho_th >= -1.0 && rho_th <= 1.0)) throw ConfigError("rho_th must be in [-1, 1]");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must be in (0, 1)");
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key=value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (seen.count(key))
      throw ConfigError(where + "duplicate key '" + key + "' (first on line " +
                        std::to_string(seen[key]) + ")");
    seen[key] = line_no;
    try {
      it->second(cfg, value, base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()), path.parent_path());
}

std::string canonical_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "source_dir=" << c.source_dir.generic_string() << "\n"
    << "target_dir=" << c.target_dir.generic_string() << "\n"
    << "patch_h=" << c.patch_h << "\npatch_w=" << c.patch_w << "\n"
    << "depth=" << c.depth << "\nfilters=" << c.filters << "\n"
    << "dropout=" << format_double(c.dropout) << "\n"
    << "epochs=" << c.epochs << "\nbatch=" << c.batch << "\nseed=" << c.seed << "\n"
    << "lr=" << format_double(c.lr) << "\noptimizer=" << c.optimizer << "\n"
    << "lambda0=" << format_double(c.lambda0) << "\nlambda_inc=" << format_double(c.lambda_inc)
    << "\nh_prec=" << format_double(c.h_prec) << "\nrho_th=" << format_double(c.rho_th)
    << "\nsweep_step=" << format_double(c.sweep_step)
    << "\nvalidation_fraction=" << format_double(c.validation_fraction) << "\n";
  return o.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(stable_hash(canonical_config(cfg))));
  return buf;
}

int cmd_train_sae(const ExperimentConfig& cfg, std::ostream& log) {
  const Dataset source = load_source(cfg);
  ensure_out_dir(cfg.out_dir);
  const TrainedBinarizer sae = train_sae(source, cfg.model(), cfg.training());
  save_model(cfg.out_dir / "sae.ckpt", sae.model, sae.threshold);
  write_text(cfg.out_dir / "sae_history.csv", history_csv(sae.history));
  write_manifest(cfg.out_dir, "train-sae", cfg,
                 {{"best_epoch", sae.best_epoch},
                  {"validation_f1", sae.validation_f1},
                  {"threshold", sae.threshold}});
  log << "sae: best epoch " << sae.best_epoch << ", validation F1 " << sae.validation_f1
      << ", threshold " << sae.threshold << "\n";
  return kExitOk;
}

int cmd_predict(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& input,
                double threshold_override, std::ostream& log) {
  double threshold = 0.5;
  Model model = load_model(checkpoint, &threshold);
  if (threshold_override > 0.0) threshold = threshold_override;
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0, 1)");
  Page page = load_page(input);
  if (page.channels == 3 && model.sae_config().channels == 1) page = to_grayscale(page);
  ensure_out_dir(cfg.out_dir);
  const ProbabilityMap map = predict_prob_map(model, page);
  const std::string stem = input.stem().string();
  write_file(cfg.out_dir / (stem + "_prob.pgm"), write_pgm(map));
  write_file(cfg.out_dir / (stem + "_bin.pgm"), write_pgm(binarize(map, threshold)));
  log << "predict: " << stem << " binarized at " << threshold << "\n";
  return kExitOk;
}

int cmd_similarity(const ExperimentConfig& cfg, const fs::path& checkpoint, std::ostream& log) {
  const Model model = load_model(checkpoint);
  const Dataset source = load_source(cfg);
  const Dataset target = load_target(cfg);
  ensure_out_dir(cfg.out_dir);
  const DomainHistogram hs =
      domain_histogram(model, source.pages_in(Partition::kValidation), cfg.h_prec);
  const DomainHistogram ht = domain_histogram(model, target.pages, cfg.h_prec);
  const SimilarityReport report = compare_domains(hs, ht, cfg.rho_th);
  write_text(cfg.out_dir / "similarity.json", report_json(report));
  write_text(cfg.out_dir / "hist_source.csv", histogram_csv(hs));
  write_text(cfg.out_dir / "hist_target.csv", histogram_csv(ht));
  write_manifest(cfg.out_dir, "similarity", cfg,
                 {{"decision", to_string(report.decision)}, {"rho", report.rho},
                  {"degenerate_flag", report.degenerate}});
  log << "similarity: rho " << report.rho << " -> " << to_string(report.decision)
      << (report.degenerate ? " (degenerate histogram)" : "") << "\n";
  return kExitOk;
}

int cmd_run(const ExperimentConfig& cfg, std::ostream& log) {
  const Dataset source = load_source(cfg);
  const Dataset target = load_target(cfg);
  ensure_out_dir(cfg.out_dir);

  const AutoBinResult r = run_autobindann(source, target, cfg.autobin());
  save_model(cfg.out_dir / "sae.ckpt", r.sae.model, r.sae.threshold);
  write_text(cfg.out_dir / "sae_history.csv", history_csv(r.sae.history));
  if (r.bindann) {
    save_model(cfg.out_dir / "bindann.ckpt", r.bindann->model, r.bindann->threshold);
    write_text(cfg.out_dir / "bindann_history.csv", history_csv(r.bindann->history));
  }
  write_text(cfg.out_dir / "similarity.json", report_json(r.report));
  write_text(cfg.out_dir / "hist_source.csv", histogram_csv(r.source_histogram));
  write_text(cfg.out_dir / "hist_target.csv", histogram_csv(r.target_histogram));

  const fs::path mask_dir = cfg.out_dir / "masks";
  std::error_code ec;
  fs::create_directories(mask_dir, ec);
  if (ec) throw IoError("cannot create " + mask_dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < r.binarized.size(); ++i)
    write_file(mask_dir / (target.stems[i] + ".pgm"), write_pgm(r.binarized[i]));

  // Post-hoc only: target truth is read after every decision has been made.
  ordered_json extra{{"decision", to_string(r.report.decision)},
                     {"rho", r.report.rho},
                     {"degenerate_flag", r.report.degenerate},
                     {"threshold", r.chosen().threshold}};
  const std::vector<BinaryMask> truth = load_evaluation_truth(cfg.target_dir, target.stems);
  if (!truth.empty()) {
    std::string csv = "stem,f1,precision,recall,tp,fp,fn,tn\n";
    Confusion total;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const Confusion c = confusion(r.binarized[i], truth[i]);
      total += c;
      csv += score_row(target.stems[i], c);
    }
    csv += score_row("all", total);
    write_text(cfg.out_dir / "summary.csv", csv);
    extra["target_f1"] = f1(total);
    log << "run: target F1 " << f1(total) << " (evaluation only)\n";
  }
  write_manifest(cfg.out_dir, "run", cfg, extra);
  log << "run: rho " << r.report.rho << " -> " << to_string(r.report.decision) << "\n";
  return kExitOk;
}

int cmd_synth(std::uint64_t seed, const fs::path& out_dir, std::ostream& log) {
  ensure_out_dir(out_dir);
  const SyntheticDomains d = make_synthetic_domains(seed);
  save_dataset(out_dir / "source", d.source.stems, d.source.pages, d.source.ground_truth);
  save_dataset(out_dir / "target_near", d.target_near.stems, d.target_near.pages,
               d.target_near_truth);
  save_dataset(out_dir / "target_far", d.target_far.stems, d.target_far.pages, d.target_far_truth);
  log << "synth: wrote source, target_near, target_far under " << out_dir.string() << "\n";
  return kExitOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Domain-adaptive document binarization", "binadapt"};
  app.require_subcommand(1);
  app.set_version_flag("--version", BINADAPT_VERSION);

  std::string config_path, out_dir, checkpoint, input, source, target;
  std::optional<std::uint64_t> seed;
  double threshold = 0.0;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "key=value experiment file");
    if (needs_config) opt->required();
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--out", out_dir, "output directory (overrides out_dir)");
  };
  auto* train = app.add_subcommand("train-sae", "train an SAE on the source domain");
  common(train, true);
  auto* predict = app.add_subcommand("predict", "binarize one page with a checkpoint");
  common(predict, false);
  predict->add_option("--checkpoint", checkpoint)->required();
  predict->add_option("--input", input)->required();
  predict->add_option("--threshold", threshold, "overrides the checkpoint threshold");
  auto* similarity = app.add_subcommand("similarity", "compare source and target histograms");
  common(similarity, false);
  similarity->add_option("--checkpoint", checkpoint)->required();
  similarity->add_option("--source", source, "overrides source_dir");
  similarity->add_option("--target", target, "overrides target_dir");
  auto* runc = app.add_subcommand("run", "gate, adapt if needed, and binarize the target");
  common(runc, true);
  auto* synth = app.add_subcommand("synth", "write the synthetic source and target domains");
  synth->add_option("--seed", seed);
  synth->add_option("--out", out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: config: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth(seed.value_or(1), out_dir, out);
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!source.empty()) cfg.source_dir = source;
    if (!target.empty()) cfg.target_dir = target;
    cfg.validate();
    if (train->parsed()) return cmd_train_sae(cfg, out);
    if (predict->parsed()) return cmd_predict(cfg, checkpoint, input, threshold, out);
    if (similarity->parsed()) return cmd_similarity(cfg, checkpoint, out);
    return cmd_run(cfg, out);
  } catch (const ConfigError& e) {
    err << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "error: io: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    err << "error: io: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: runtime: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace binadapt::cli
