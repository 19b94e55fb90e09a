#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <nlohmann/json.hpp>

#include "cfcf/dataset.hpp"
#include "cfcf/synthetic.hpp"
#include "doctest.h"
#include "support/tempdir.hpp"

using namespace cfcf;
using namespace cfcf::dataset;
namespace fs = std::filesystem;

namespace {

// Boxes only; the sampler never touches pixels.
Sequence boxes_only(int length, Box box) {
  Sequence s;
  s.name = "boxes";
  s.boxes.assign(static_cast<std::size_t>(length), box);
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Sequence> toy_sequences() {
  synthetic::TranslateOptions a;
  a.frames = 12;
  a.width = 160;
  a.height = 120;
  a.start_x = 30;
  a.start_y = 40;
  a.seed = 11;
  synthetic::TranslateOptions b = a;
  b.object = 30;
  b.vx = -2;
  b.vy = 1.5;
  b.start_x = 110;
  b.seed = 12;
  auto sa = synthetic::translating_square(a);
  auto sb = synthetic::translating_square(b);
  sa.name = "a";
  sb.name = "b";
  // Non-square boxes for the second sequence.
  for (auto& box : sb.boxes) box.h *= 0.6;
  return {synthetic::to_sequence(sa), synthetic::to_sequence(sb)};
}

}  // namespace

TEST_CASE("sampler ranges") {
  std::mt19937_64 rng(1);
  const Sequence seq = boxes_only(50, {10, 10, 100, 64});
  SamplerConfig cfg;
  double lo = 0.0;
  double hi = 0.0;
  for (int i = 0; i < 5000; ++i) {
    const SampleDraw d = draw_sample(seq, cfg, rng);
    CHECK(std::abs(d.source_shift_x) <= 30.0);
    CHECK(std::abs(d.source_shift_y) <= 0.3 * 64);
    lo = std::min(lo, d.source_shift_x);
    hi = std::max(hi, d.source_shift_x);
    CHECK(d.crop_side == doctest::Approx(160.0));
    CHECK(d.shift_dx == static_cast<int>(std::lround(-d.source_shift_x * 101 / 160.0)));
    CHECK(d.frame_gap != 0);
    CHECK(d.test_frame - d.template_frame == d.frame_gap);
    CHECK(d.test_frame >= 0);
    CHECK(d.test_frame < 50);
  }
  CHECK(lo < -29.0);
  CHECK(hi > 29.0);
}

TEST_CASE("zero shift range gives unshifted samples with a non-zero gap") {
  std::mt19937_64 rng(2);
  SamplerConfig cfg;
  cfg.shift_frac = 0.0;
  const auto seqs = toy_sequences();
  for (int i = 0; i < 20; ++i) {
    const SampleDraw d = draw_sample(seqs[0], cfg, rng);
    CHECK(d.shift_dx == 0);
    CHECK(d.shift_dy == 0);
    CHECK(std::abs(d.frame_gap) >= 1);
    const Triplet t = make_triplet(seqs[0], d, cfg);
    const corrfilter::Peak p = corrfilter::argmax(t.g.grid);
    CHECK(p.row == 50);
    CHECK(p.col == 50);
  }
}

TEST_CASE("frame gap statistics on a long sequence") {
  std::mt19937_64 rng(3);
  const Sequence seq = boxes_only(1000, {10, 10, 40, 40});
  double s1 = 0.0;
  double s2 = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const int gap = draw_sample(seq, SamplerConfig{}, rng).frame_gap;
    s1 += gap;
    s2 += static_cast<double>(gap) * gap;
  }
  const double sd = std::sqrt((s2 - s1 * s1 / n) / (n - 1));
  CHECK(sd >= 4.0);
  CHECK(sd <= 6.0);
}

TEST_CASE("shift uniformity: chi-square test does not reject at 0.01") {
  std::mt19937_64 rng(4);
  const Sequence seq = boxes_only(40, {0, 0, 100, 64});
  const int bins = 20;
  const int n = 10000;
  std::vector<int> cx(bins, 0);
  std::vector<int> cy(bins, 0);
  for (int i = 0; i < n; ++i) {
    const SampleDraw d = draw_sample(seq, SamplerConfig{}, rng);
    const auto bin = [&](double u, double half) {
      return std::min(bins - 1, static_cast<int>((u + half) / (2 * half) * bins));
    };
    ++cx[static_cast<std::size_t>(bin(d.source_shift_x, 30.0))];
    ++cy[static_cast<std::size_t>(bin(d.source_shift_y, 0.3 * 64))];
  }
  const double expected = static_cast<double>(n) / bins;
  const auto stat = [&](const std::vector<int>& c) {
    double s = 0.0;
    for (int k : c) s += (k - expected) * (k - expected) / expected;
    return s;
  };
  const double critical =
      boost::math::quantile(boost::math::chi_squared(bins - 1), 0.99);
  CHECK(stat(cx) < critical);
  CHECK(stat(cy) < critical);
}

TEST_CASE("degenerate sequences") {
  std::mt19937_64 rng(5);
  CHECK_THROWS_AS(draw_sample(boxes_only(1, {0, 0, 4, 4}), SamplerConfig{}, rng),
                  DegenerateSequence);
  testing::TempDir dir("degenerate");
  CHECK_THROWS_AS(generate_dataset({boxes_only(1, {0, 0, 4, 4})}, GenerateOptions{3}, dir.path()),
                  NoValidSequences);
}

TEST_CASE("generate, validate and load") {
  const auto seqs = toy_sequences();
  testing::TempDir root("dataset");

  SUBCASE("count 0 writes an empty manifest") {
    const Manifest m = generate_dataset(seqs, GenerateOptions{0, 7}, root / "empty");
    CHECK(m.samples.empty());
    std::size_t entries = 0;
    for (const auto& e : fs::directory_iterator(root / "empty")) {
      (void)e;
      ++entries;
    }
    CHECK(entries == 1);
    CHECK(load_all(root / "empty").empty());
  }

  GenerateOptions opts{100, 9};
  generate_dataset(seqs, opts, root / "a");

  SUBCASE("byte-identical across runs and thread counts") {
    GenerateOptions threaded = opts;
    threaded.threads = 3;
    generate_dataset(seqs, threaded, root / "b");
    CHECK(slurp(root / "a" / "manifest.json") == slurp(root / "b" / "manifest.json"));
    for (const char* s : {"000000", "000042", "000099"}) {
      for (const char* f : {"meta.json", "x.png", "y.png"}) {
        CHECK(slurp(root / "a" / s / f) == slurp(root / "b" / s / f));
      }
    }
    const auto j = nlohmann::json::parse(slurp(root / "a" / "manifest.json"));
    CHECK(j.at("shift_frac").get<double>() == 0.3);
    CHECK(j.at("frame_sigma").get<double>() == 5.0);
    CHECK(j.at("seed").get<int>() == 9);
  }

  SUBCASE("validator sweep") {
    const ValidationReport r = validate_dataset(root / "a");
    CHECK(r.samples == 100);
    CHECK(r.ok());
    for (const auto& p : r.problems) MESSAGE(p);
  }

  SUBCASE("loaded patches match the in-memory samples") {
    const Manifest m = load_manifest(root / "a");
    const auto loaded = load_triplets(root / "a", m, {0, 5, 99});
    const std::size_t idx[] = {0, 5, 99};
    for (std::size_t k = 0; k < 3; ++k) {
      std::mt19937_64 rng(sample_seed(9, idx[k]));
      std::uniform_int_distribution<std::size_t> pick(0, seqs.size() - 1);
      const Sequence& seq = seqs[pick(rng)];
      const Triplet t = make_triplet(seq, draw_sample(seq, SamplerConfig{}, rng), SamplerConfig{});
      const Triplet& l = loaded[k];
      CHECK(l.sequence == t.sequence);
      CHECK(l.shift_dx == t.shift_dx);
      CHECK(l.shift_dy == t.shift_dy);
      double worst = 0.0;
      for (std::size_t i = 0; i < t.x_patch.size(); ++i) {
        worst = std::max(worst, std::abs(l.x_patch.data[i] - t.x_patch.data[i]));
        worst = std::max(worst, std::abs(l.y_patch.data[i] - t.y_patch.data[i]));
      }
      CHECK(worst <= 1.0 / 255.0);
      const corrfilter::Peak p = corrfilter::argmax(l.g.grid);
      CHECK(p.value == 1.0);
      CHECK(p.row == 50 + l.shift_dy);
      CHECK(p.col == 50 + l.shift_dx);
      CHECK(l.g.grid == t.g.grid);
    }
  }

  SUBCASE("tampered metadata") {
    const fs::path meta = root / "a" / "000003" / "meta.json";
    auto j = nlohmann::json::parse(slurp(meta));
    j["shift_dx"] = 40;
    std::ofstream(meta, std::ios::trunc) << j.dump(2);
    const Manifest m = load_manifest(root / "a");
    CHECK_THROWS_AS(load_triplets(root / "a", m, {3}), CorruptSample);
    CHECK_FALSE(validate_dataset(root / "a").ok());
  }

  SUBCASE("tampered image") {
    const fs::path x = root / "a" / "000004" / "x.png";
    std::string bytes = slurp(x);
    bytes[bytes.size() / 2] ^= 0x5a;
    std::ofstream(x, std::ios::binary | std::ios::trunc) << bytes;
    const Manifest m = load_manifest(root / "a");
    CHECK_THROWS_AS(load_triplets(root / "a", m, {4}), CorruptSample);
  }
}

TEST_CASE("sequences on disk") {
  synthetic::TranslateOptions o;
  o.frames = 11;
  o.width = 90;
  o.height = 70;
  o.object = 20;
  o.start_x = 10;
  o.start_y = 20;
  const auto syn = synthetic::translating_square(o);
  testing::TempDir root("sequences");
  synthetic::write_sequence(syn, root / "s1");
  const Sequence seq = load_sequence(root / "s1");
  CHECK(seq.length() == 11);
  CHECK(seq.boxes[10] == syn.boxes[10]);
  const Tensor f = seq.frame(10);
  double worst = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    worst = std::max(worst, std::abs(f.data[i] - syn.frames[10].data[i]));
  }
  CHECK(worst <= 0.5 / 255.0 + 1e-12);

  SUBCASE("numeric frame order") {
    fs::create_directories(root / "s2");
    for (int i : {1, 2, 10}) {
      fs::copy_file(root / "s1" / "00000001.png", root / "s2" / (std::to_string(i) + ".png"));
    }
    const auto frames = list_frames(root / "s2");
    REQUIRE(frames.size() == 3);
    CHECK(frames[2].filename() == "10.png");
  }
  SUBCASE("frame and box counts must agree") {
    fs::remove(root / "s1" / "00000003.png");
    CHECK_THROWS_AS(load_sequence(root / "s1"), LengthMismatch);
  }
  SUBCASE("root with several sequences") {
    synthetic::write_sequence(syn, root / "s0");
    const auto all = load_sequences(root.path());
    REQUIRE(all.size() == 2);
    CHECK(all[0].name == "s0");
    CHECK(load_sequences(root / "s1").size() == 1);
  }
}
