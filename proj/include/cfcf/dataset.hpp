#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cfcf/box.hpp"
#include "cfcf/image.hpp"
#include "cfcf/triplet.hpp"

namespace cfcf::dataset {

/// Annotated frame sequence. Frames are decoded lazily through `load_frame`
/// so on-disk and in-memory sequences look the same.
struct Sequence {
  std::string name;
  std::vector<Box> boxes;
  std::function<Tensor(int)> load_frame;

  int length() const noexcept { return static_cast<int>(boxes.size()); }
  Tensor frame(int index) const;
};

/// Directory with numerically sorted frame images and groundtruth.txt.
/// Throws IoError, ParseError, or LengthMismatch when frame and box counts
/// differ.
Sequence load_sequence(const std::filesystem::path& dir);

/// `root` itself when it holds groundtruth.txt, otherwise every immediate
/// subdirectory that does (sorted by name).
std::vector<Sequence> load_sequences(const std::filesystem::path& root);

Sequence in_memory_sequence(std::string name, std::vector<Tensor> frames, std::vector<Box> boxes);

/// Image files of a directory in numeric filename order.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

struct SamplerConfig {
  int patch_size = image::kPatchSize;
  double shift_frac = 0.3;
  double frame_sigma = 5.0;
};

/// Random choices behind one triplet, before any pixel work.
struct SampleDraw {
  int template_frame = 0;
  int test_frame = 0;
  int frame_gap = 0;
  double source_shift_x = 0.0;  // u_x, source pixels
  double source_shift_y = 0.0;
  int shift_dx = 0;             // object displacement in patch pixels
  int shift_dy = 0;
  double crop_side = 0.0;       // of the test crop
};

/// Independent stream seed for sample `index`.
std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index);

/// round(N(0, sigma)), redrawn while zero.
int draw_frame_gap(std::mt19937_64& rng, double sigma);

/// Patch-space displacement of the object when the crop centre moves by
/// `source_shift`: round(-source_shift * patch / side).
int patch_shift(double source_shift, double side, int patch_size);

/// A sequence is usable when it has at least two frames and every box has
/// positive width and height.
bool is_valid(const Sequence& seq);

/// Template frame uniform; test frame = template + gap clamped to the
/// sequence (redrawn when the clamp lands on the template); crop centre of
/// the test patch moved by u ~ U[-f W, f W] x U[-f H, f H] of the test box.
/// Throws DegenerateSequence for sequences shorter than two frames.
SampleDraw draw_sample(const Sequence& seq, const SamplerConfig& cfg, std::mt19937_64& rng);

Triplet make_triplet(const Sequence& seq, const SampleDraw& draw, const SamplerConfig& cfg);
Triplet sample_triplet(const Sequence& seq, const SamplerConfig& cfg, std::mt19937_64& rng);

// --- on-disk datasets -----------------------------------------------------

inline constexpr int kDatasetFormatVersion = 1;

struct SampleMeta {
  int shift_dx = 0;
  int shift_dy = 0;
  int frame_gap = 0;
  std::string sequence;
  int template_frame = 0;
  int test_frame = 0;
  double sigma = 0.0;
  double source_shift_x = 0.0;
  double source_shift_y = 0.0;
  double box_w = 0.0;
  double box_h = 0.0;
  double crop_side = 0.0;
  int patch_size = image::kPatchSize;
  std::string x_hash;
  std::string y_hash;
};

struct Manifest {
  std::uint64_t seed = 0;
  SamplerConfig sampler;
  std::vector<std::string> sequences;
  std::vector<std::string> samples;  // sample directory names
};

struct GenerateOptions {
  std::size_t count = 0;
  std::uint64_t seed = 42;
  SamplerConfig sampler;
  int threads = 1;
};

/// Writes `count` sample directories (x.png, y.png, meta.json) and
/// manifest.json. Output bytes depend only on the seed, the options and the
/// sequences. Throws NoValidSequences or IoError.
Manifest generate_dataset(const std::vector<Sequence>& sequences, const GenerateOptions& opts,
                          const std::filesystem::path& out_dir);

Manifest load_manifest(const std::filesystem::path& dir);
SampleMeta read_meta(const std::filesystem::path& sample_dir);

/// Throws CorruptSample when the metadata breaks the sampling contract.
void check_meta(const SampleMeta& meta, const SamplerConfig& cfg);

/// Decodes the chosen samples and rebuilds g from the metadata. Throws
/// CorruptSample on hash, shape or bound violations.
std::vector<Triplet> load_triplets(const std::filesystem::path& dir, const Manifest& manifest,
                                   const std::vector<std::size_t>& indices);
std::vector<Triplet> load_all(const std::filesystem::path& dir);

struct ValidationReport {
  std::size_t samples = 0;
  double gap_std = 0.0;
  std::vector<std::string> problems;
  bool ok() const noexcept { return problems.empty(); }
};

/// Sweeps every sample: shift bounds, crop side, g peak, file hashes, shapes.
ValidationReport validate_dataset(const std::filesystem::path& dir);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace cfcf::dataset
