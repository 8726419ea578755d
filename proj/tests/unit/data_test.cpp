#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <string>

#include "binadapt/dataset.hpp"
#include "binadapt/error.hpp"
#include "binadapt/image.hpp"
#include "binadapt/patches.hpp"
#include "binadapt/pgm.hpp"
#include "binadapt/synthetic.hpp"
#include "oracles.hpp"

using namespace binadapt;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("binadapt_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Page random_page(Rng& rng, std::size_t w, std::size_t h, std::size_t c = 1) {
  Page p(w, h, c);
  for (double& v : p.pixels) v = static_cast<double>(rng.index(256)) / 255.0;
  return p;
}

}  // namespace

TEST(Pgm, MinimalBinaryFile) {
  std::string f = "P5\n1 1\n255\n";
  f.push_back('\0');
  Page p = read_pgm(bytes_of(f));
  ASSERT_EQ(p.width, 1u);
  EXPECT_EQ(p.pixels[0], 0.0);
}

TEST(Pgm, AsciiTwoByTwo) {
  Page p = read_pgm(bytes_of("P2\n# comment\n2 2\n255\n0 255\n255 0\n"));
  ASSERT_EQ(p.pixels.size(), 4u);
  EXPECT_EQ(p.pixels, (std::vector<double>{0.0, 1.0, 1.0, 0.0}));
}

TEST(Pgm, RewriteIsCanonicalP5WithSamePayload) {
  const std::string payload = std::string("\x00\x10\x80\xff\x7f\x01", 6);
  const std::string f = "P5 # odd header\n3\t2 255\n" + payload;
  const std::vector<std::uint8_t> out = write_pgm(read_pgm(bytes_of(f)));
  EXPECT_EQ(std::string(out.begin(), out.end()), "P5\n3 2\n255\n" + payload);
}

TEST(Pgm, ErrorsCarryOffsets) {
  auto offset_of = [](const std::string& f) -> long {
    try {
      read_pgm(bytes_of(f));
    } catch (const ParseError& e) {
      return static_cast<long>(e.offset());
    }
    return -1;
  };
  EXPECT_EQ(offset_of("P7\n1 1\n255\n"), 1);
  EXPECT_EQ(offset_of("P5\n1 1\n65535\n\0\0"), 7);
  EXPECT_GE(offset_of("P5\n4 4\n255\nabc"), 11);
  EXPECT_GE(offset_of("P2\n1 1\n255\n300\n"), 11);
  EXPECT_EQ(offset_of("X"), 0);
}

TEST(Pgm, ColorPixmapConvertsToLuma) {
  std::string f = "P6\n1 1\n255\n";
  f += std::string("\xff\x00\x00", 3);
  Page c = read_pnm(bytes_of(f));
  ASSERT_EQ(c.channels, 3u);
  Page g = to_grayscale(c);
  ASSERT_EQ(g.channels, 1u);
  EXPECT_NEAR(g.pixels[0], 0.299, 1e-12);
}

TEST(Pgm, MaskAndMapEncoding) {
  BinaryMask m(2, 1);
  m.bits = {1, 0};
  auto mb = write_pgm(m);
  EXPECT_EQ(mb.back(), 0);
  EXPECT_EQ(mb[mb.size() - 2], 255);
  ProbabilityMap pm(2, 1);
  pm.values = {0.5, 1.0};
  auto pb = write_pgm(pm);
  EXPECT_EQ(pb[pb.size() - 2], 128);
  EXPECT_EQ(pb.back(), 255);
  Page gt(3, 1);
  gt.pixels = {127.0 / 255.0, 128.0 / 255.0, 1.0};
  EXPECT_EQ(mask_from_page(gt).bits, (std::vector<std::uint8_t>{0, 1, 1}));
}

TEST(Patches, ExactTiling) {
  PatchGrid g = split_patches(Page(512, 512), 256, 256);
  EXPECT_EQ(g.count(), 4u);
  EXPECT_EQ(g.pad_right, 0u);
  EXPECT_EQ(g.pad_bottom, 0u);
}

TEST(Patches, PaddedTiling) {
  PatchGrid g = split_patches(Page(300, 300), 256, 256);
  EXPECT_EQ(g.count(), 4u);
  EXPECT_EQ(g.pad_right, 212u);
  EXPECT_EQ(g.pad_bottom, 212u);
  PatchGrid s = split_patches(Page(10, 10), 32, 32);
  EXPECT_EQ(s.count(), 1u);
  EXPECT_EQ(s.pad_right, 22u);
}

TEST(Patches, EdgeReplication) {
  Page p(2, 1);
  p.pixels = {0.25, 0.75};
  PatchGrid g = split_patches(p, 4, 4);
  for (std::size_t y = 0; y < 4; ++y) {
    EXPECT_EQ(g.patches[0].at(0, y, 0), 0.25);
    for (std::size_t x = 1; x < 4; ++x) EXPECT_EQ(g.patches[0].at(0, y, x), 0.75);
  }
}

TEST(Patches, RandomRoundTripIsBitExact) {
  Rng rng(44);
  for (int i = 0; i < 60; ++i) {
    const std::size_t w = 1 + rng.index(90), h = 1 + rng.index(90), c = rng.index(2) ? 1 : 3;
    Page p = random_page(rng, w, h, c);
    Page back = assemble_page(split_patches(p, 1 + rng.index(40), 1 + rng.index(40)));
    ASSERT_EQ(back.width, w);
    ASSERT_EQ(back.height, h);
    EXPECT_EQ(back.pixels, p.pixels);
  }
}

TEST(Patches, BlockConstantPlacement) {
  PatchGrid g = split_patches(Page(4, 4), 2, 2);
  for (std::size_t i = 0; i < 4; ++i) g.patches[i].fill(static_cast<double>(i));
  ProbabilityMap m = assemble(g);
  EXPECT_EQ(m.at(0, 0), 0.0);
  EXPECT_EQ(m.at(0, 3), 1.0);
  EXPECT_EQ(m.at(3, 0), 2.0);
  EXPECT_EQ(m.at(3, 3), 3.0);
}

TEST(Patches, MissingPatchThrows) {
  PatchGrid g = split_patches(Page(4, 4), 2, 2);
  g.patches.pop_back();
  EXPECT_THROW(assemble(g), InvalidArgument);
}

TEST(Dataset, PartitionArithmeticAndDeterminism) {
  Dataset ds;
  for (int i = 0; i < 10; ++i) {
    ds.stems.push_back("p" + std::to_string(i));
    ds.pages.emplace_back(4, 4);
    ds.ground_truth.emplace_back(4, 4);
  }
  assign_partitions(ds, 0.2, 7);
  EXPECT_EQ(ds.indices(Partition::kTrain).size(), 8u);
  EXPECT_EQ(ds.indices(Partition::kValidation).size(), 2u);
  Dataset again = ds;
  assign_partitions(again, 0.2, 7);
  EXPECT_EQ(again.partition, ds.partition);
}

TEST(Dataset, LoadFromDisk) {
  const fs::path root = scratch_dir("dataset");
  Rng rng(3);
  std::vector<std::string> stems{"a", "b", "c"};
  std::vector<Page> pages;
  std::vector<BinaryMask> masks;
  for (int i = 0; i < 3; ++i) {
    pages.push_back(random_page(rng, 5, 4));
    BinaryMask m(5, 4);
    m.bits[static_cast<std::size_t>(i)] = 1;
    masks.push_back(m);
  }
  save_dataset(root / "src", stems, pages, masks);
  save_dataset(root / "tgt", stems, pages, {});
  Dataset src = load_dataset(root / "src", DomainRole::kSource, 0.34, 1);
  ASSERT_EQ(src.size(), 3u);
  EXPECT_EQ(src.stems, stems);
  EXPECT_EQ(src.pages[1].pixels, pages[1].pixels);
  EXPECT_EQ(src.ground_truth[2].bits, masks[2].bits);
  EXPECT_EQ(src.indices(Partition::kValidation).size(), 1u);
  Dataset tgt = load_dataset(root / "tgt", DomainRole::kTarget, 0.5, 1);
  EXPECT_TRUE(tgt.ground_truth.empty());
  EXPECT_EQ(tgt.indices(Partition::kValidation).size(), 0u);

  fs::remove(root / "src" / "gt" / "b.pgm");
  try {
    load_dataset(root / "src", DomainRole::kSource, 0.34, 1);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
  write_file(root / "src" / "gt" / "b.pgm", write_pgm(BinaryMask(3, 3)));
  EXPECT_THROW(load_dataset(root / "src", DomainRole::kSource, 0.34, 1), ShapeError);
  fs::remove_all(root);
}

TEST(Synthetic, ForegroundFractionAndContrast) {
  SyntheticDomains d = make_synthetic_domains(5);
  ASSERT_GE(d.source.size(), 8u);
  auto fraction = [](const BinaryMask& m) {
    return static_cast<double>(m.foreground()) / static_cast<double>(m.bits.size());
  };
  double src_mean = 0.0, far_mean = 0.0;
  for (std::size_t i = 0; i < d.source.size(); ++i) {
    EXPECT_GE(d.source.pages[i].width, 128u);
    const double f = fraction(d.source.ground_truth[i]);
    EXPECT_GE(f, 0.02);
    EXPECT_LE(f, 0.30);
    src_mean += mean_intensity(d.source.pages[i]);
    far_mean += mean_intensity(d.target_far.pages[i]);
  }
  const double n = static_cast<double>(d.source.size());
  EXPECT_GT(std::abs(src_mean / n - far_mean / n), 0.3);
  EXPECT_TRUE(d.target_far.ground_truth.empty());
  EXPECT_EQ(d.target_far_truth.size(), d.target_far.size());
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  SyntheticDomains a = make_synthetic_domains(9), b = make_synthetic_domains(9);
  for (std::size_t i = 0; i < a.source.size(); ++i) {
    EXPECT_EQ(a.source.pages[i].pixels, b.source.pages[i].pixels);
    EXPECT_EQ(a.target_far.pages[i].pixels, b.target_far.pages[i].pixels);
  }
  EXPECT_EQ(a.source.partition, b.source.partition);
}
