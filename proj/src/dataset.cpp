#include "cfcf/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace cfcf::dataset {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kImageExtensions{".png", ".jpg", ".jpeg", ".bmp", ".ppm",
                                             ".pgm", ".tif", ".tiff"};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Digits of the stem as a number; filenames without digits sort after.
std::pair<long long, std::string> frame_key(const fs::path& p) {
  const std::string stem = p.stem().string();
  std::string digits;
  for (char c : stem) {
    if (std::isdigit(static_cast<unsigned char>(c))) digits += c;
  }
  const long long n = digits.empty() || digits.size() > 17 ? -1 : std::stoll(digits);
  return {n < 0 ? std::numeric_limits<long long>::max() : n, stem};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CorruptSample(path.string() + " is not valid JSON: " + e.what());
  }
}

std::string sample_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

json meta_to_json(const SampleMeta& m) {
  return json{{"format_version", kDatasetFormatVersion},
              {"shift_dx", m.shift_dx},
              {"shift_dy", m.shift_dy},
              {"frame_gap", m.frame_gap},
              {"sequence", m.sequence},
              {"template_frame", m.template_frame},
              {"test_frame", m.test_frame},
              {"sigma", m.sigma},
              {"source_shift", {m.source_shift_x, m.source_shift_y}},
              {"box_w", m.box_w},
              {"box_h", m.box_h},
              {"crop_side", m.crop_side},
              {"patch_size", m.patch_size},
              {"x_hash", m.x_hash},
              {"y_hash", m.y_hash}};
}

double global_bound(int patch_size, double shift_frac) { return shift_frac * patch_size; }

}  // namespace

Tensor Sequence::frame(int index) const {
  if (index < 0 || index >= length()) throw InvalidArgument("frame index out of range");
  if (!load_frame) throw IoError("sequence '" + name + "' has no frame source");
  return load_frame(index);
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<fs::path> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (kImageExtensions.count(lower(entry.path().extension().string())) != 0) {
      frames.push_back(entry.path());
    }
  }
  std::sort(frames.begin(), frames.end(),
            [](const fs::path& a, const fs::path& b) { return frame_key(a) < frame_key(b); });
  return frames;
}

Sequence load_sequence(const fs::path& dir) {
  const fs::path gt = dir / "groundtruth.txt";
  if (!fs::exists(gt)) throw IoError(dir.string() + " has no groundtruth.txt");
  std::vector<fs::path> frames = list_frames(dir);
  std::vector<Box> boxes = read_boxes(gt);
  if (frames.size() != boxes.size()) {
    throw LengthMismatch(dir.string() + ": " + std::to_string(frames.size()) + " frames but " +
                         std::to_string(boxes.size()) + " boxes");
  }
  Sequence seq;
  seq.name = fs::path(dir).lexically_normal().filename().string();
  if (seq.name.empty()) seq.name = fs::path(dir).lexically_normal().parent_path().filename().string();
  seq.boxes = std::move(boxes);
  seq.load_frame = [frames = std::move(frames)](int i) {
    return image::read_image(frames[static_cast<std::size_t>(i)]);
  };
  return seq;
}

std::vector<Sequence> load_sequences(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError(root.string() + " is not a directory");
  if (fs::exists(root / "groundtruth.txt")) return {load_sequence(root)};
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "groundtruth.txt")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<Sequence> out;
  for (const auto& d : dirs) out.push_back(load_sequence(d));
  return out;
}

Sequence in_memory_sequence(std::string name, std::vector<Tensor> frames, std::vector<Box> boxes) {
  if (frames.size() != boxes.size()) throw LengthMismatch("frame and box counts differ");
  Sequence seq;
  seq.name = std::move(name);
  seq.boxes = std::move(boxes);
  seq.load_frame = [frames = std::move(frames)](int i) {
    return frames[static_cast<std::size_t>(i)];
  };
  return seq;
}

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 of the pair
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int draw_frame_gap(std::mt19937_64& rng, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("frame sigma must be positive");
  std::normal_distribution<double> n(0.0, sigma);
  for (;;) {
    const int gap = static_cast<int>(std::lround(n(rng)));
    if (gap != 0) return gap;
  }
}

int patch_shift(double source_shift, double side, int patch_size) {
  return static_cast<int>(std::lround(-source_shift * patch_size / side));
}

bool is_valid(const Sequence& seq) {
  if (seq.length() < 2) return false;
  return std::all_of(seq.boxes.begin(), seq.boxes.end(),
                     [](const Box& b) { return b.w > 0.0 && b.h > 0.0; });
}

SampleDraw draw_sample(const Sequence& seq, const SamplerConfig& cfg, std::mt19937_64& rng) {
  const int n = seq.length();
  if (n < 2) throw DegenerateSequence("sequence '" + seq.name + "' has fewer than two frames");
  SampleDraw d;
  std::uniform_int_distribution<int> pick(0, n - 1);
  d.template_frame = pick(rng);
  do {
    d.test_frame = std::clamp(d.template_frame + draw_frame_gap(rng, cfg.frame_sigma), 0, n - 1);
  } while (d.test_frame == d.template_frame);
  d.frame_gap = d.test_frame - d.template_frame;

  const Box& test = seq.boxes[static_cast<std::size_t>(d.test_frame)];
  if (!(test.w > 0.0) || !(test.h > 0.0)) {
    throw InvalidBox("sequence '" + seq.name + "' frame " + std::to_string(d.test_frame) +
                     " has an empty box");
  }
  std::uniform_real_distribution<double> ux(-cfg.shift_frac * test.w, cfg.shift_frac * test.w);
  std::uniform_real_distribution<double> uy(-cfg.shift_frac * test.h, cfg.shift_frac * test.h);
  d.source_shift_x = ux(rng);
  d.source_shift_y = uy(rng);
  d.crop_side = image::crop_side(test);
  d.shift_dx = patch_shift(d.source_shift_x, d.crop_side, cfg.patch_size);
  d.shift_dy = patch_shift(d.source_shift_y, d.crop_side, cfg.patch_size);
  return d;
}

Triplet make_triplet(const Sequence& seq, const SampleDraw& d, const SamplerConfig& cfg) {
  const Box& tmpl = seq.boxes[static_cast<std::size_t>(d.template_frame)];
  const Box& test = seq.boxes[static_cast<std::size_t>(d.test_frame)];
  Triplet t;
  t.y_patch = image::crop_square(seq.frame(d.template_frame), tmpl, cfg.patch_size);
  const Tensor test_frame = seq.frame(d.test_frame);
  t.x_patch = image::crop_resize(test_frame, test.center_x() + d.source_shift_x,
                                 test.center_y() + d.source_shift_y, d.crop_side, d.crop_side,
                                 cfg.patch_size, cfg.patch_size);
  t.shift_dx = d.shift_dx;
  t.shift_dy = d.shift_dy;
  t.frame_gap = d.frame_gap;
  const int c = cfg.patch_size / 2;
  t.g = corrfilter::make_desired_response(cfg.patch_size, cfg.patch_size, c + d.shift_dy,
                                          c + d.shift_dx,
                                          corrfilter::default_sigma(cfg.patch_size, cfg.patch_size));
  t.sequence = seq.name;
  t.template_frame = d.template_frame;
  t.test_frame = d.test_frame;
  return t;
}

Triplet sample_triplet(const Sequence& seq, const SamplerConfig& cfg, std::mt19937_64& rng) {
  return make_triplet(seq, draw_sample(seq, cfg, rng), cfg);
}

// --- on-disk datasets -----------------------------------------------------

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016" PRIx64, h);
  return out;
}

Manifest generate_dataset(const std::vector<Sequence>& sequences, const GenerateOptions& opts,
                          const fs::path& out_dir) {
  std::vector<const Sequence*> valid;
  for (const auto& s : sequences) {
    if (is_valid(s)) valid.push_back(&s);
  }
  if (valid.empty()) throw NoValidSequences("no sequence with two or more annotated frames");
  if (opts.sampler.patch_size < 1 || !(opts.sampler.shift_frac >= 0.0)) {
    throw InvalidArgument("invalid sampler configuration");
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  Manifest manifest;
  manifest.seed = opts.seed;
  manifest.sampler = opts.sampler;
  for (const auto* s : valid) manifest.sequences.push_back(s->name);
  for (std::size_t i = 0; i < opts.count; ++i) manifest.samples.push_back(sample_name(i));

  auto make_sample = [&](std::size_t i) {
    std::mt19937_64 rng(sample_seed(opts.seed, i));
    std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
    const Sequence& seq = *valid[pick(rng)];
    const SampleDraw d = draw_sample(seq, opts.sampler, rng);
    const Triplet t = make_triplet(seq, d, opts.sampler);
    const fs::path dir = out_dir / manifest.samples[i];
    fs::create_directories(dir);
    image::write_png(dir / "x.png", t.x_patch);
    image::write_png(dir / "y.png", t.y_patch);
    const Box& test = seq.boxes[static_cast<std::size_t>(d.test_frame)];
    SampleMeta m;
    m.shift_dx = d.shift_dx;
    m.shift_dy = d.shift_dy;
    m.frame_gap = d.frame_gap;
    m.sequence = seq.name;
    m.template_frame = d.template_frame;
    m.test_frame = d.test_frame;
    m.sigma = t.g.sigma;
    m.source_shift_x = d.source_shift_x;
    m.source_shift_y = d.source_shift_y;
    m.box_w = test.w;
    m.box_h = test.h;
    m.crop_side = d.crop_side;
    m.patch_size = opts.sampler.patch_size;
    m.x_hash = file_hash(dir / "x.png");
    m.y_hash = file_hash(dir / "y.png");
    write_text(dir / "meta.json", meta_to_json(m).dump(2) + "\n");
  };

  const std::size_t workers = std::min<std::size_t>(
      opts.count,
      static_cast<std::size_t>(opts.threads > 0 ? opts.threads
                                                : std::max(1u, std::thread::hardware_concurrency())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < opts.count; ++i) make_sample(i);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < opts.count; i += workers) make_sample(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  const json j{{"format_version", kDatasetFormatVersion},
               {"seed", manifest.seed},
               {"count", manifest.samples.size()},
               {"patch_size", opts.sampler.patch_size},
               {"shift_frac", opts.sampler.shift_frac},
               {"frame_sigma", opts.sampler.frame_sigma},
               {"sequences", manifest.sequences},
               {"samples", manifest.samples}};
  write_text(out_dir / "manifest.json", j.dump(2) + "\n");
  return manifest;
}

Manifest load_manifest(const fs::path& dir) {
  const json j = read_json(dir / "manifest.json");
  Manifest m;
  try {
    if (j.at("format_version").get<int>() != kDatasetFormatVersion) {
      throw VersionMismatch("unsupported dataset format version");
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.sampler.patch_size = j.at("patch_size").get<int>();
    m.sampler.shift_frac = j.at("shift_frac").get<double>();
    m.sampler.frame_sigma = j.at("frame_sigma").get<double>();
    m.sequences = j.at("sequences").get<std::vector<std::string>>();
    m.samples = j.at("samples").get<std::vector<std::string>>();
    if (j.at("count").get<std::size_t>() != m.samples.size()) {
      throw CorruptSample("manifest count disagrees with its sample list");
    }
  } catch (const json::exception& e) {
    throw CorruptSample(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

SampleMeta read_meta(const fs::path& sample_dir) {
  const json j = read_json(sample_dir / "meta.json");
  SampleMeta m;
  try {
    m.shift_dx = j.at("shift_dx").get<int>();
    m.shift_dy = j.at("shift_dy").get<int>();
    m.frame_gap = j.at("frame_gap").get<int>();
    m.sequence = j.at("sequence").get<std::string>();
    m.template_frame = j.at("template_frame").get<int>();
    m.test_frame = j.at("test_frame").get<int>();
    m.sigma = j.at("sigma").get<double>();
    m.source_shift_x = j.at("source_shift").at(0).get<double>();
    m.source_shift_y = j.at("source_shift").at(1).get<double>();
    m.box_w = j.at("box_w").get<double>();
    m.box_h = j.at("box_h").get<double>();
    m.crop_side = j.at("crop_side").get<double>();
    m.patch_size = j.at("patch_size").get<int>();
    m.x_hash = j.at("x_hash").get<std::string>();
    m.y_hash = j.at("y_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw CorruptSample(sample_dir.string() + ": malformed meta.json: " + e.what());
  }
  return m;
}

void check_meta(const SampleMeta& m, const SamplerConfig& cfg) {
  auto fail = [&](const std::string& what) { throw CorruptSample(what); };
  if (m.patch_size != cfg.patch_size) fail("patch size differs from the manifest");
  if (!(m.box_w > 0.0) || !(m.box_h > 0.0)) fail("non-positive box size");
  if (std::abs(m.crop_side - 2.0 * std::sqrt(m.box_w * m.box_h)) > 1e-9 * m.crop_side) {
    fail("crop side is not 2 sqrt(w h)");
  }
  if (std::abs(m.source_shift_x) > cfg.shift_frac * m.box_w * (1 + 1e-12) ||
      std::abs(m.source_shift_y) > cfg.shift_frac * m.box_h * (1 + 1e-12)) {
    fail("source shift outside [-f W, f W] x [-f H, f H]");
  }
  const double scale = m.patch_size / m.crop_side;
  if (std::abs(m.shift_dx) > cfg.shift_frac * m.box_w * scale + 0.5 ||
      std::abs(m.shift_dy) > cfg.shift_frac * m.box_h * scale + 0.5) {
    fail("patch shift (" + std::to_string(m.shift_dx) + ", " + std::to_string(m.shift_dy) +
         ") outside the sampling range");
  }
  if (m.shift_dx != patch_shift(m.source_shift_x, m.crop_side, m.patch_size) ||
      m.shift_dy != patch_shift(m.source_shift_y, m.crop_side, m.patch_size)) {
    fail("patch shift inconsistent with the source shift");
  }
  const int c = m.patch_size / 2;
  if (c + m.shift_dx < 0 || c + m.shift_dx >= m.patch_size || c + m.shift_dy < 0 ||
      c + m.shift_dy >= m.patch_size) {
    fail("desired response peak outside the patch");
  }
  if (m.frame_gap == 0 || m.test_frame - m.template_frame != m.frame_gap) {
    fail("frame gap inconsistent with the frame indices");
  }
  if (!(m.sigma > 0.0)) fail("non-positive sigma");
}

std::vector<Triplet> load_triplets(const fs::path& dir, const Manifest& manifest,
                                   const std::vector<std::size_t>& indices) {
  std::vector<Triplet> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= manifest.samples.size()) throw InvalidArgument("sample index out of range");
    const fs::path sdir = dir / manifest.samples[idx];
    const SampleMeta m = read_meta(sdir);
    try {
      check_meta(m, manifest.sampler);
    } catch (const CorruptSample& e) {
      throw CorruptSample(sdir.string() + ": " + e.what());
    }
    if (file_hash(sdir / "x.png") != m.x_hash || file_hash(sdir / "y.png") != m.y_hash) {
      throw CorruptSample(sdir.string() + ": image hash mismatch");
    }
    Triplet t;
    t.x_patch = image::read_image(sdir / "x.png");
    t.y_patch = image::read_image(sdir / "y.png");
    if (t.x_patch.height != m.patch_size || t.x_patch.width != m.patch_size ||
        t.y_patch.height != m.patch_size || t.y_patch.width != m.patch_size) {
      throw CorruptSample(sdir.string() + ": patch shape differs from meta");
    }
    t.shift_dx = m.shift_dx;
    t.shift_dy = m.shift_dy;
    t.frame_gap = m.frame_gap;
    const int c = m.patch_size / 2;
    t.g = corrfilter::make_desired_response(m.patch_size, m.patch_size, c + m.shift_dy,
                                            c + m.shift_dx, m.sigma);
    t.sequence = m.sequence;
    t.template_frame = m.template_frame;
    t.test_frame = m.test_frame;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Triplet> load_all(const fs::path& dir) {
  const Manifest m = load_manifest(dir);
  std::vector<std::size_t> idx(m.samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return load_triplets(dir, m, idx);
}

ValidationReport validate_dataset(const fs::path& dir) {
  ValidationReport report;
  const Manifest manifest = load_manifest(dir);
  double s1 = 0.0;
  double s2 = 0.0;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const std::string& name = manifest.samples[i];
    try {
      const SampleMeta m = read_meta(dir / name);
      check_meta(m, manifest.sampler);
      const double bound = global_bound(m.patch_size, manifest.sampler.shift_frac);
      if (std::abs(m.shift_dx) > bound || std::abs(m.shift_dy) > bound) {
        report.problems.push_back(name + ": shift exceeds " + std::to_string(bound) +
                                  " patch pixels (box aspect ratio above 4)");
      }
      const Triplet t = load_triplets(dir, manifest, {i}).front();
      const corrfilter::Peak p = corrfilter::argmax(t.g.grid);
      const int c = m.patch_size / 2;
      if (p.row != c + m.shift_dy || p.col != c + m.shift_dx || p.value != 1.0) {
        report.problems.push_back(name + ": desired response peak does not match the shift");
      }
      s1 += m.frame_gap;
      s2 += static_cast<double>(m.frame_gap) * m.frame_gap;
      ++report.samples;
    } catch (const Error& e) {
      report.problems.push_back(name + ": " + e.what());
    }
  }
  if (report.samples > 1) {
    const double n = static_cast<double>(report.samples);
    report.gap_std = std::sqrt(std::max(0.0, (s2 - s1 * s1 / n) / (n - 1.0)));
  }
  return report;
}

}  // namespace cfcf::dataset
