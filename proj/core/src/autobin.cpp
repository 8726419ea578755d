#include "binadapt/autobin.hpp"

#include "binadapt/error.hpp"

namespace binadapt {

DomainHistogram domain_histogram(const Model& model, const std::vector<Page>& pages,
                                 double h_prec) {
  if (pages.empty()) throw InvalidArgument("domain histogram needs at least one page");
  DomainHistogram h(h_prec);
  for (const ProbabilityMap& map : predict_prob_maps(model, pages))
    accumulate_histogram(map, h_prec, h);
  return normalize_histogram(h);
}

AutoBinResult run_autobindann(const Dataset& source, const Dataset& target,
                              const AutoBinConfig& cfg) {
  if (target.role != DomainRole::kTarget) throw InvalidArgument("second dataset must be a target");
  target.validate();
  if (target.pages.empty()) throw InvalidArgument("target dataset is empty");

  AutoBinResult r;
  r.sae = train_sae(source, cfg.model, cfg.train);
  r.source_histogram = domain_histogram(
      r.sae.model, source.pages_in(Partition::kValidation), cfg.h_prec);
  r.target_histogram = domain_histogram(r.sae.model, target.pages, cfg.h_prec);
  r.report = compare_domains(r.source_histogram, r.target_histogram, cfg.rho_th);

  if (r.report.decision == GateDecision::kUseDa)
    r.bindann = train_bindann(source, target, cfg.model, cfg.train);

  const TrainedBinarizer& chosen = r.chosen();
  for (const ProbabilityMap& map : predict_prob_maps(chosen.model, target.pages))
    r.binarized.push_back(binarize(map, chosen.threshold));
  return r;
}

}  // namespace binadapt
