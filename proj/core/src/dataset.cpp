#include "binadapt/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "binadapt/error.hpp"
#include "binadapt/pgm.hpp"
#include "binadapt/rng.hpp"

namespace fs = std::filesystem;

namespace binadapt {
namespace {

bool is_image(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("missing directory " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_image(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

fs::path find_truth(const fs::path& gt_dir, const std::string& stem) {
  for (const char* ext : {".pgm", ".pnm"}) {
    fs::path p = gt_dir / (stem + ext);
    if (fs::exists(p)) return p;
  }
  return {};
}

}  // namespace

std::vector<std::size_t> Dataset::indices(Partition which) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < partition.size(); ++i)
    if (partition[i] == which) out.push_back(i);
  return out;
}

std::vector<Page> Dataset::pages_in(Partition which) const {
  std::vector<Page> out;
  for (std::size_t i : indices(which)) out.push_back(pages[i]);
  return out;
}

void Dataset::validate() const {
  if (stems.size() != pages.size() || partition.size() != pages.size())
    throw InvalidArgument("dataset stems, pages and partitions disagree in length");
  if (role == DomainRole::kTarget && !ground_truth.empty())
    throw InvalidArgument("target datasets carry no ground truth");
  if (role == DomainRole::kSource) {
    if (ground_truth.size() != pages.size())
      throw InvalidArgument("every source page needs a ground-truth mask");
    for (std::size_t i = 0; i < pages.size(); ++i)
      if (ground_truth[i].width != pages[i].width || ground_truth[i].height != pages[i].height)
        throw ShapeError("ground truth for '" + stems[i] + "' does not match its page size");
  }
}

void assign_partitions(Dataset& dataset, double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction >= 0.0 && validation_fraction <= 1.0))
    throw InvalidArgument("validation fraction must be in [0, 1]");
  const std::size_t n = dataset.pages.size();
  dataset.partition.assign(n, Partition::kTrain);
  if (dataset.role == DomainRole::kTarget) return;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, stable_hash("partition")));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * validation_fraction));
  for (std::size_t k = 0; k < std::min(n_val, n); ++k)
    dataset.partition[order[k]] = Partition::kValidation;
}

Dataset load_dataset(const fs::path& root, DomainRole role, double validation_fraction,
                     std::uint64_t seed) {
  Dataset ds;
  ds.role = role;
  const auto files = list_images(root / "images");
  if (files.empty()) throw IoError("no images found in " + (root / "images").string());

  std::vector<std::string> missing;
  for (const auto& file : files) {
    ds.stems.push_back(file.stem().string());
    ds.pages.push_back(to_grayscale(load_page(file)));
    if (role != DomainRole::kSource) continue;
    const fs::path gt = find_truth(root / "gt", ds.stems.back());
    if (gt.empty()) {
      missing.push_back(ds.stems.back());
      continue;
    }
    BinaryMask mask = mask_from_page(load_page(gt));
    if (mask.width != ds.pages.back().width || mask.height != ds.pages.back().height)
      throw ShapeError("ground truth for '" + ds.stems.back() + "' is " +
                       std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                       " but the page is " + std::to_string(ds.pages.back().width) + "x" +
                       std::to_string(ds.pages.back().height));
    ds.ground_truth.push_back(std::move(mask));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& s : missing) list += (list.empty() ? "" : ", ") + s;
    throw IoError("missing ground truth for: " + list);
  }
  assign_partitions(ds, validation_fraction, seed);
  ds.validate();
  return ds;
}

std::vector<BinaryMask> load_evaluation_truth(const fs::path& root,
                                              const std::vector<std::string>& stems) {
  const fs::path gt_dir = root / "gt";
  if (!fs::is_directory(gt_dir)) return {};
  std::vector<BinaryMask> out;
  for (const auto& stem : stems) {
    const fs::path p = find_truth(gt_dir, stem);
    if (p.empty()) throw IoError("missing evaluation ground truth for '" + stem + "'");
    out.push_back(mask_from_page(load_page(p)));
  }
  return out;
}

void save_dataset(const fs::path& root, const std::vector<std::string>& stems,
                  const std::vector<Page>& pages, const std::vector<BinaryMask>& truth) {
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (ec) throw IoError("cannot create " + (root / "images").string() + ": " + ec.message());
  for (std::size_t i = 0; i < pages.size(); ++i)
    write_file(root / "images" / (stems[i] + ".pgm"), write_pgm(pages[i]));
  if (truth.empty()) return;
  fs::create_directories(root / "gt", ec);
  if (ec) throw IoError("cannot create " + (root / "gt").string() + ": " + ec.message());
  for (std::size_t i = 0; i < truth.size(); ++i)
    write_file(root / "gt" / (stems[i] + ".pgm"), write_pgm(truth[i]));
}

}  // namespace binadapt
