#ifndef JNR_SYNTH_DATA_HPP_
#define JNR_SYNTH_DATA_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jnr/label_codec.hpp"
#include "jnr/random.hpp"
#include "jnr/tensor.hpp"

namespace jnr {

/// Everything that determines one rendered image.
struct RenderSpec {
  JerseyLabel label;
  std::uint64_t style_seed = 0;  // the "game": jersey colours, font, layout
  std::uint64_t noise_seed = 0;  // per-sample jitter, noise, occluder
  double occlusion_level = 0.0;  // fraction of the digit box covered
  double blur_sigma = 0.0;       // pixels
};

/// Renders a jersey crop as [3,height,width] RGB in [0,1]. Deterministic in
/// (spec, height, width). Throws ConfigError below 16x16.
Tensor<float> render_sample(const RenderSpec& spec, int height, int width);

/// Axis-aligned box of the digit block as rendered, in pixels; empty for
/// Null labels. Exposed for tests.
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};
PixelBox digit_box(const RenderSpec& spec, int height, int width);

/// Rotates the hue of every pixel of a [3,h,w] image by `delta` (fraction of
/// the hue wheel, taken modulo 1); saturation and value are preserved.
void shift_hue(Tensor<float>& image, double delta);

/// Hue shift drawn uniformly from [-magnitude, magnitude].
/// Precondition: magnitude in [0, 0.5].
void hue_jitter(Tensor<float>& image, double magnitude, Rng& rng);

struct Hsv {
  double h, s, v;
};
Hsv rgb_to_hsv(double r, double g, double b);
std::array<double, 3> hsv_to_rgb(const Hsv& hsv);

/// Training-time augmentation. Affine transforms are not supported; asking
/// for them throws ConfigError.
class AugmentationPolicy {
 public:
  static constexpr double kDefaultHueJitter = 0.4;

  explicit AugmentationPolicy(double hue_jitter_max = kDefaultHueJitter,
                              bool affine_enabled = false);
  static AugmentationPolicy none() { return AugmentationPolicy(0.0); }

  double hue_jitter_max() const { return hue_jitter_max_; }
  bool affine_enabled() const { return false; }

 private:
  double hue_jitter_max_;
};

enum class Split { Train, Val, Test };
std::string_view split_name(Split split);
/// Throws InputError for anything but train/val/test.
Split parse_split(std::string_view name);

struct SplitRatios {
  double train = 0.7;
  double val = 0.12;
  double test = 0.18;

  friend bool operator==(const SplitRatios&, const SplitRatios&) = default;
};

/// Largest-remainder apportionment of `total` items over the three splits:
/// floor each quota, then hand leftovers to the largest fractional parts
/// (ties in train, val, test order).
std::array<std::size_t, 3> split_sizes(std::size_t total, const SplitRatios& ratios);

struct GeneratorParams {
  int image_height = 64;
  int image_width = 64;
  SplitRatios ratios;
  std::uint64_t master_seed = 0;
  double occlusion_probability = 0.0;
  double occlusion_max = 0.0;
  double blur_max = 0.0;

  friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;
};

struct ManifestRecord {
  std::string image_path;
  JerseyLabel label;
  std::uint64_t style_seed = 0;
  Split split = Split::Train;
  std::uint64_t noise_seed = 0;
  double occlusion_level = 0.0;
  double blur_sigma = 0.0;

  RenderSpec render_spec() const {
    return {label, style_seed, noise_seed, occlusion_level, blur_sigma};
  }
  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct DatasetManifest {
  ClassSet class_set = ClassSet::first_numbers(2);
  GeneratorParams params;
  std::vector<ManifestRecord> records;

  /// Record indices of one split, in manifest order.
  std::vector<std::size_t> split_indices(Split split) const;

  /// Throws ConfigError if a label is outside the class set or a style seed
  /// appears in more than one split.
  void validate() const;

  /// Header lines start with '#': format tag, generator parameters, class
  /// set. Then one record per line: path, label, style_seed, split,
  /// noise_seed, occlusion_level, blur_sigma (whitespace separated).
  void save(std::ostream& os) const;
  static DatasetManifest load(std::istream& is);

  /// FNV-1a over the serialised manifest, as 16 hex digits.
  std::string content_hash() const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

using ClassCounts = std::map<JerseyLabel, int>;

ClassCounts uniform_counts(const ClassSet& classes, int per_class);

/// Geometric counts from min_count up to min_count * ratio (both exact),
/// assigned to classes in a seeded random order. ratio must be an integer
/// >= 1 so the extreme counts are exact.
ClassCounts imbalanced_counts(const ClassSet& classes, int min_count, int ratio,
                              std::uint64_t seed);

/// Builds a manifest with exactly the requested per-class counts. Style
/// seeds are partitioned disjointly across splits (same apportionment as
/// the records; each split needs at least 3). Records are stratified by
/// class across splits, then shuffled by params.master_seed.
DatasetManifest generate_dataset(const ClassSet& classes, const ClassCounts& counts,
                                 std::vector<std::uint64_t> style_seeds,
                                 const GeneratorParams& params);

/// In-memory image store backing a manifest. Pixels are kept as 8-bit RGB,
/// exactly what the PNG files hold.
class Dataset {
 public:
  /// Renders every record.
  static Dataset render(DatasetManifest manifest);
  /// Reads every record's PNG relative to `root`.
  static Dataset load(DatasetManifest manifest, const std::filesystem::path& root);
  /// Reads `root`/manifest.txt and the images it lists.
  static Dataset load(const std::filesystem::path& root);

  /// Writes manifest.txt and all PNGs under `root`.
  void write(const std::filesystem::path& root) const;

  const DatasetManifest& manifest() const { return manifest_; }
  const ClassSet& classes() const { return manifest_.class_set; }
  int height() const { return manifest_.params.image_height; }
  int width() const { return manifest_.params.image_width; }
  std::size_t size() const { return manifest_.records.size(); }
  const std::vector<std::size_t>& split(Split s) const {
    return splits_[static_cast<std::size_t>(s)];
  }

  /// Planar (CHW) bytes of one record.
  std::span<const std::uint8_t> pixels(std::size_t record) const;
  /// Record as [3,h,w] floats, byte / 255.
  Tensor<float> image(std::size_t record) const;

 private:
  explicit Dataset(DatasetManifest manifest);
  std::size_t image_bytes() const {
    return 3u * static_cast<std::size_t>(height()) * static_cast<std::size_t>(width());
  }

  DatasetManifest manifest_;
  std::vector<std::uint8_t> pixels_;
  std::array<std::vector<std::size_t>, 3> splits_;
};

/// Quantises a [3,h,w] image in [0,1] to planar bytes (round to nearest).
std::vector<std::uint8_t> to_bytes(const Tensor<float>& image);

template <typename Scalar>
struct Batch {
  Tensor<Scalar> images;  // [N,3,h,w]
  std::vector<TargetTriple> targets;
  std::vector<TargetIndices> target_indices;
  std::vector<JerseyLabel> labels;
};

/// Assembles a batch from positions within one split. Augmentation is
/// applied to the train split only. Throws std::out_of_range for bad
/// positions.
template <typename Scalar>
Batch<Scalar> load_batch(const Dataset& data, Split split,
                         std::span<const std::size_t> positions,
                         const AugmentationPolicy& policy, Rng& rng);

}  // namespace jnr

#endif  // JNR_SYNTH_DATA_HPP_
