#include "jnr/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "jnr/errors.hpp"
#include "jnr/png_io.hpp"

namespace jnr {

namespace {

// 5x7 digit glyphs, one row per byte, bit 4 = leftmost column.
constexpr std::array<std::array<std::uint8_t, 7>, 10> kGlyphs{{
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
}};
constexpr int kGlyphCols = 5;
constexpr int kGlyphRows = 7;

bool glyph_on(int digit, int row, int col) {
  if (row < 0 || row >= kGlyphRows || col < 0 || col >= kGlyphCols) return false;
  return (kGlyphs[static_cast<std::size_t>(digit)][static_cast<std::size_t>(row)] >>
          (kGlyphCols - 1 - col)) & 1;
}

using Rgb = std::array<double, 3>;

// Per-game appearance, a pure function of the style seed.
struct Style {
  Rgb jersey;
  Rgb ink;
  double digit_height;  // fraction of image height
  double aspect;        // digit width / digit height
  double stroke;        // half-width of a glyph cell stroke, in cell units
  double slant;         // horizontal shift per unit of height
  double gap;           // inter-digit gap, fraction of digit width
  double shade;         // vertical shading amplitude
};

Style style_for(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x7374796c65));
  Style s{};
  const Hsv jersey{rng.uniform(), rng.uniform(0.35, 0.9), rng.uniform(0.3, 0.9)};
  s.jersey = hsv_to_rgb(jersey);
  const bool dark_ink = jersey.v > 0.6;
  const Hsv ink{rng.uniform(), rng.uniform(0.0, 0.5),
                dark_ink ? rng.uniform(0.05, 0.25) : rng.uniform(0.85, 1.0)};
  s.ink = hsv_to_rgb(ink);
  s.digit_height = rng.uniform(0.45, 0.62);
  s.aspect = (5.0 / 7.0) * rng.uniform(0.8, 1.05);
  s.stroke = rng.uniform(0.5, 0.72);
  s.slant = rng.uniform(-0.15, 0.15);
  s.gap = rng.uniform(0.12, 0.35);
  s.shade = rng.uniform(0.0, 0.15);
  return s;
}

struct Layout {
  std::vector<int> digits;  // left to right
  double x0 = 0, y0 = 0;    // top-left of the first digit's cell grid
  double digit_w = 0, digit_h = 0, gap = 0;
  double total_w() const {
    const double n = static_cast<double>(digits.size());
    return n * digit_w + std::max(0.0, n - 1) * gap;
  }
};

Layout layout_for(const RenderSpec& spec, const Style& style, int height, int width,
                  Rng& noise) {
  Layout l;
  if (!spec.label.is_null()) {
    const int n = spec.label.value();
    if (n >= 10) l.digits.push_back(n / 10);
    l.digits.push_back(n % 10);
  }
  const double scale = noise.uniform(0.92, 1.08);
  const double dx = noise.uniform(-0.06, 0.06) * width;
  const double dy = noise.uniform(-0.06, 0.06) * height;
  l.digit_h = style.digit_height * scale * height;
  l.digit_w = l.digit_h * style.aspect;
  l.gap = style.gap * l.digit_w;
  // Two digits must fit in 90% of the width.
  const double fit = 0.9 * width / (2 * l.digit_w + l.gap);
  if (fit < 1.0) {
    l.digit_h *= fit;
    l.digit_w *= fit;
    l.gap *= fit;
  }
  l.x0 = 0.5 * width + dx - 0.5 * l.total_w();
  l.y0 = 0.5 * height + dy - 0.5 * l.digit_h;
  return l;
}

PixelBox box_of(const Layout& l, const Style& style, int height, int width) {
  if (l.digits.empty()) return {};
  const double margin_x = (style.stroke - 0.5) * l.digit_w / kGlyphCols +
                          std::abs(style.slant) * 0.5 * l.digit_h;
  const double margin_y = (style.stroke - 0.5) * l.digit_h / kGlyphRows;
  PixelBox b;
  b.x0 = std::clamp(static_cast<int>(std::floor(l.x0 - margin_x)), 0, width);
  b.x1 = std::clamp(static_cast<int>(std::ceil(l.x0 + l.total_w() + margin_x)), 0, width);
  b.y0 = std::clamp(static_cast<int>(std::floor(l.y0 - margin_y)), 0, height);
  b.y1 = std::clamp(static_cast<int>(std::ceil(l.y0 + l.digit_h + margin_y)), 0, height);
  return b;
}

// Whether a point (pixel units) falls on a stroke of the laid-out digits.
bool ink_at(const Layout& l, const Style& style, double px, double py) {
  const double v = (py - l.y0) / l.digit_h * kGlyphRows;
  if (v < -1.0 || v > kGlyphRows + 1.0) return false;
  const double sx = px + style.slant * (py - (l.y0 + 0.5 * l.digit_h));
  for (std::size_t d = 0; d < l.digits.size(); ++d) {
    const double left = l.x0 + static_cast<double>(d) * (l.digit_w + l.gap);
    const double u = (sx - left) / l.digit_w * kGlyphCols;
    if (u < -1.0 || u > kGlyphCols + 1.0) continue;
    const int r = static_cast<int>(std::floor(v));
    const int c = static_cast<int>(std::floor(u));
    for (int rr = r - 1; rr <= r + 1; ++rr) {
      for (int cc = c - 1; cc <= c + 1; ++cc) {
        if (!glyph_on(l.digits[d], rr, cc)) continue;
        if (std::abs(u - (cc + 0.5)) <= style.stroke &&
            std::abs(v - (rr + 0.5)) <= style.stroke) {
          return true;
        }
      }
    }
  }
  return false;
}

void gaussian_blur(std::vector<double>& img, int height, int width, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  }
  const double norm = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (double& k : kernel) k /= norm;

  const std::size_t plane = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  std::vector<double> tmp(plane);
  for (std::size_t c = 0; c < 3; ++c) {
    double* p = img.data() + c * plane;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = std::clamp(x + i, 0, width - 1);
          acc += kernel[static_cast<std::size_t>(i + radius)] * p[y * width + xx];
        }
        tmp[static_cast<std::size_t>(y * width + x)] = acc;
      }
    }
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = std::clamp(y + i, 0, height - 1);
          acc += kernel[static_cast<std::size_t>(i + radius)] *
                 tmp[static_cast<std::size_t>(yy * width + x)];
        }
        p[y * width + x] = acc;
      }
    }
  }
}

}  // namespace

Hsv rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out{0.0, mx > 0.0 ? delta / mx : 0.0, mx};
  if (delta <= 0.0) return out;
  double h;
  if (mx == r) {
    h = (g - b) / delta;
  } else if (mx == g) {
    h = 2.0 + (b - r) / delta;
  } else {
    h = 4.0 + (r - g) / delta;
  }
  h /= 6.0;
  out.h = h - std::floor(h);
  return out;
}

std::array<double, 3> hsv_to_rgb(const Hsv& hsv) {
  const double h6 = (hsv.h - std::floor(hsv.h)) * 6.0;
  const int sector = std::min(5, static_cast<int>(h6));
  const double f = h6 - sector;
  const double v = hsv.v, s = hsv.s;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

PixelBox digit_box(const RenderSpec& spec, int height, int width) {
  const Style style = style_for(spec.style_seed);
  Rng noise(mix_seed(spec.noise_seed, 0x6e6f697365));
  return box_of(layout_for(spec, style, height, width, noise), style, height, width);
}

Tensor<float> render_sample(const RenderSpec& spec, int height, int width) {
  if (height < 16 || width < 16) {
    throw ConfigError("render size must be at least 16x16");
  }
  const Style style = style_for(spec.style_seed);
  Rng noise(mix_seed(spec.noise_seed, 0x6e6f697365));
  const Layout layout = layout_for(spec, style, height, width, noise);
  const PixelBox box = box_of(layout, style, height, width);

  const std::size_t plane = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  std::vector<double> img(3 * plane);
  constexpr int kSuper = 3;
  for (int y = 0; y < height; ++y) {
    const double shade = 1.0 + style.shade * (2.0 * (y + 0.5) / height - 1.0);
    for (int x = 0; x < width; ++x) {
      double cover = 0.0;
      if (!layout.digits.empty()) {
        int hits = 0;
        for (int sy = 0; sy < kSuper; ++sy) {
          for (int sx = 0; sx < kSuper; ++sx) {
            hits += ink_at(layout, style, x + (sx + 0.5) / kSuper, y + (sy + 0.5) / kSuper);
          }
        }
        cover = static_cast<double>(hits) / (kSuper * kSuper);
      }
      const std::size_t p = static_cast<std::size_t>(y * width + x);
      for (std::size_t c = 0; c < 3; ++c) {
        const double bg = std::clamp(style.jersey[c] * shade, 0.0, 1.0);
        img[c * plane + p] = (1.0 - cover) * bg + cover * style.ink[c];
      }
    }
  }

  const Rgb occluder{noise.uniform(), noise.uniform(), noise.uniform()};
  const bool from_left = noise.uniform() < 0.5;
  if (spec.occlusion_level > 0.0 && !box.empty()) {
    const int bw = box.x1 - box.x0;
    const int covered =
        static_cast<int>(std::lround(std::clamp(spec.occlusion_level, 0.0, 1.0) * bw));
    const int ox0 = from_left ? box.x0 : box.x1 - covered;
    for (int y = box.y0; y < box.y1; ++y) {
      for (int x = ox0; x < ox0 + covered; ++x) {
        const std::size_t p = static_cast<std::size_t>(y * width + x);
        for (std::size_t c = 0; c < 3; ++c) img[c * plane + p] = occluder[c];
      }
    }
  }

  for (double& v : img) v += 0.015 * noise.normal();
  gaussian_blur(img, height, width, spec.blur_sigma);

  Tensor<float> out({3, height, width});
  for (std::size_t i = 0; i < img.size(); ++i) {
    out[static_cast<Index>(i)] = static_cast<float>(std::clamp(img[i], 0.0, 1.0));
  }
  return out;
}

void shift_hue(Tensor<float>& image, double delta) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("shift_hue expects a [3,h,w] image");
  }
  const Index plane = image.dim(1) * image.dim(2);
  float* d = image.data().data();
  for (Index p = 0; p < plane; ++p) {
    Hsv hsv = rgb_to_hsv(d[p], d[plane + p], d[2 * plane + p]);
    if (hsv.s <= 0.0) continue;
    hsv.h += delta;
    hsv.h -= std::floor(hsv.h);
    const auto rgb = hsv_to_rgb(hsv);
    d[p] = static_cast<float>(rgb[0]);
    d[plane + p] = static_cast<float>(rgb[1]);
    d[2 * plane + p] = static_cast<float>(rgb[2]);
  }
}

void hue_jitter(Tensor<float>& image, double magnitude, Rng& rng) {
  if (!(magnitude >= 0.0 && magnitude <= 0.5)) {
    throw std::invalid_argument("hue jitter magnitude must be in [0, 0.5]");
  }
  const double delta = rng.uniform(-magnitude, magnitude);
  if (delta != 0.0) shift_hue(image, delta);
}

AugmentationPolicy::AugmentationPolicy(double hue_jitter_max, bool affine_enabled)
    : hue_jitter_max_(hue_jitter_max) {
  if (affine_enabled) {
    throw ConfigError("affine augmentation is not supported: it can push the "
                      "jersey number out of the crop");
  }
  if (!(hue_jitter_max >= 0.0 && hue_jitter_max <= 0.5)) {
    throw ConfigError("hue_jitter_max must be in [0, 0.5]");
  }
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw InputError("unknown split '" + std::string(name) + "'");
}

std::array<std::size_t, 3> split_sizes(std::size_t total, const SplitRatios& r) {
  const std::array<double, 3> ratios{r.train, r.val, r.test};
  for (double x : ratios) {
    if (!(x > 0.0)) throw ConfigError("split ratios must be positive");
  }
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = ratios[i] * static_cast<double>(total);
    sizes[i] = static_cast<std::size_t>(std::floor(quota));
    frac[i] = quota - std::floor(quota);
    assigned += sizes[i];
  }
  while (assigned < total) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (frac[i] > frac[best]) best = i;
    }
    ++sizes[best];
    frac[best] = -1.0;
    ++assigned;
  }
  return sizes;
}

std::vector<std::size_t> DatasetManifest::split_indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) out.push_back(i);
  }
  return out;
}

void DatasetManifest::validate() const {
  std::map<std::uint64_t, Split> owner;
  for (const auto& r : records) {
    if (!class_set.contains(r.label)) {
      throw ConfigError("record " + r.image_path + " has label '" + r.label.token() +
                        "' outside the class set");
    }
    auto [it, inserted] = owner.emplace(r.style_seed, r.split);
    if (!inserted && it->second != r.split) {
      throw ConfigError("style seed " + std::to_string(r.style_seed) +
                        " appears in both " + std::string(split_name(it->second)) +
                        " and " + std::string(split_name(r.split)));
    }
  }
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void DatasetManifest::save(std::ostream& os) const {
  os << "# jnr-manifest 1\n";
  os << "# image_size " << params.image_height << ' ' << params.image_width << '\n';
  os << "# split_ratios " << fmt_double(params.ratios.train) << ' '
     << fmt_double(params.ratios.val) << ' ' << fmt_double(params.ratios.test) << '\n';
  os << "# master_seed " << params.master_seed << '\n';
  os << "# occlusion " << fmt_double(params.occlusion_probability) << ' '
     << fmt_double(params.occlusion_max) << '\n';
  os << "# blur_max " << fmt_double(params.blur_max) << '\n';
  os << "# classes";
  for (const auto& l : class_set.labels()) os << ' ' << l.token();
  os << '\n';
  for (const auto& r : records) {
    os << r.image_path << ' ' << r.label.token() << ' ' << r.style_seed << ' '
       << split_name(r.split) << ' ' << r.noise_seed << ' '
       << fmt_double(r.occlusion_level) << ' ' << fmt_double(r.blur_sigma) << '\n';
  }
}

DatasetManifest DatasetManifest::load(std::istream& is) {
  DatasetManifest m;
  std::string line;
  std::size_t line_no = 0;
  bool have_classes = false;
  auto fail = [&](const std::string& what) -> ParseError { return ParseError(what, line_no); };
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, key;
      ls >> hash >> key;
      if (key == "jnr-manifest") {
        int version = 0;
        ls >> version;
        if (version != 1) throw fail("unsupported manifest version");
      } else if (key == "image_size") {
        ls >> m.params.image_height >> m.params.image_width;
      } else if (key == "split_ratios") {
        ls >> m.params.ratios.train >> m.params.ratios.val >> m.params.ratios.test;
      } else if (key == "master_seed") {
        ls >> m.params.master_seed;
      } else if (key == "occlusion") {
        ls >> m.params.occlusion_probability >> m.params.occlusion_max;
      } else if (key == "blur_max") {
        ls >> m.params.blur_max;
      } else if (key == "classes") {
        std::vector<JerseyLabel> labels;
        std::string tok;
        while (ls >> tok) labels.push_back(JerseyLabel::parse(tok));
        m.class_set = ClassSet(std::move(labels));
        have_classes = true;
        continue;
      } else {
        throw fail("unknown header key '" + key + "'");
      }
      if (ls.fail()) throw fail("malformed header line");
      continue;
    }
    ManifestRecord r;
    std::string label, split;
    ls >> r.image_path >> label >> r.style_seed >> split >> r.noise_seed >>
        r.occlusion_level >> r.blur_sigma;
    if (ls.fail()) throw fail("malformed record");
    try {
      r.label = JerseyLabel::parse(label);
      r.split = parse_split(split);
    } catch (const ValidationError& e) {
      throw fail(e.what());
    }
    m.records.push_back(std::move(r));
  }
  if (!have_classes) throw ParseError("manifest has no '# classes' header", line_no);
  m.validate();
  return m;
}

std::string DatasetManifest::content_hash() const {
  std::ostringstream os;
  save(os);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ClassCounts uniform_counts(const ClassSet& classes, int per_class) {
  if (per_class < 0) throw ConfigError("per-class count must be non-negative");
  ClassCounts counts;
  for (const auto& l : classes.labels()) counts[l] = per_class;
  return counts;
}

ClassCounts imbalanced_counts(const ClassSet& classes, int min_count, int ratio,
                              std::uint64_t seed) {
  if (min_count < 1 || ratio < 1) {
    throw ConfigError("imbalanced counts need min_count >= 1 and ratio >= 1");
  }
  const std::size_t k = classes.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x696d62));
  rng.shuffle(order);
  ClassCounts counts;
  for (std::size_t rank = 0; rank < k; ++rank) {
    int c;
    if (rank == 0) {
      c = min_count;
    } else if (rank + 1 == k) {
      c = min_count * ratio;
    } else {
      const double t = static_cast<double>(rank) / static_cast<double>(k - 1);
      c = static_cast<int>(std::lround(min_count * std::pow(static_cast<double>(ratio), t)));
    }
    counts[classes[order[rank]]] = c;
  }
  return counts;
}

DatasetManifest generate_dataset(const ClassSet& classes, const ClassCounts& counts,
                                 std::vector<std::uint64_t> style_seeds,
                                 const GeneratorParams& params) {
  if (params.image_height < 16 || params.image_width < 16) {
    throw ConfigError("image size must be at least 16x16");
  }
  if (!(params.occlusion_probability >= 0.0 && params.occlusion_probability <= 1.0) ||
      !(params.occlusion_max >= 0.0 && params.occlusion_max <= 1.0) ||
      !(params.blur_max >= 0.0)) {
    throw ConfigError("occlusion/blur parameters out of range");
  }
  {
    std::vector<std::uint64_t> sorted = style_seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ConfigError("style seeds must be distinct");
    }
  }
  for (const auto& [label, count] : counts) {
    if (!classes.contains(label)) {
      throw UnknownClassError("count given for label '" + label.token() +
                              "' outside the class set");
    }
    if (count < 0) throw ConfigError("negative count for label '" + label.token() + "'");
  }

  Rng rng(mix_seed(params.master_seed, 0x6d616e));
  const auto seed_sizes = split_sizes(style_seeds.size(), params.ratios);
  for (std::size_t s = 0; s < 3; ++s) {
    if (seed_sizes[s] < 3) {
      throw ConfigError(std::to_string(style_seeds.size()) +
                        " style seeds leave fewer than 3 for the " +
                        std::string(split_name(static_cast<Split>(s))) +
                        " split; provide more seeds");
    }
  }
  rng.shuffle(style_seeds);
  std::array<std::vector<std::uint64_t>, 3> pools;
  {
    std::size_t next = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      pools[s].assign(style_seeds.begin() + static_cast<std::ptrdiff_t>(next),
                      style_seeds.begin() + static_cast<std::ptrdiff_t>(next + seed_sizes[s]));
      next += seed_sizes[s];
    }
  }

  // Records grouped by class (class-set order) so the apportionment below
  // stratifies every class across the splits.
  std::vector<JerseyLabel> labels;
  for (const auto& label : classes.labels()) {
    auto it = counts.find(label);
    if (it == counts.end()) continue;
    labels.insert(labels.end(), static_cast<std::size_t>(it->second), label);
  }
  const std::size_t total = labels.size();
  if (total == 0) throw ConfigError("dataset would be empty");
  const auto quota = split_sizes(total, params.ratios);

  DatasetManifest m;
  m.class_set = classes;
  m.params = params;
  m.records.resize(total);
  std::array<std::size_t, 3> assigned{};
  for (std::size_t k = 0; k < total; ++k) {
    std::size_t best = 3;
    double best_deficit = 0.0;
    for (std::size_t s = 0; s < 3; ++s) {
      if (assigned[s] == quota[s]) continue;
      const double deficit = static_cast<double>(quota[s]) * static_cast<double>(k + 1) /
                                 static_cast<double>(total) -
                             static_cast<double>(assigned[s]);
      if (best == 3 || deficit > best_deficit) {
        best = s;
        best_deficit = deficit;
      }
    }
    auto& r = m.records[k];
    r.label = labels[k];
    r.split = static_cast<Split>(best);
    r.style_seed = pools[best][assigned[best] % pools[best].size()];
    ++assigned[best];
  }

  rng.shuffle(m.records);
  for (std::size_t i = 0; i < total; ++i) {
    auto& r = m.records[i];
    char name[32];
    std::snprintf(name, sizeof name, "images/%06zu.png", i);
    r.image_path = name;
    r.noise_seed = mix_seed(params.master_seed, i);
    Rng rec(mix_seed(r.noise_seed, 0x726563));
    r.occlusion_level = rec.uniform() < params.occlusion_probability
                            ? rec.uniform(0.0, params.occlusion_max)
                            : 0.0;
    r.blur_sigma = params.blur_max > 0.0 ? rec.uniform(0.0, params.blur_max) : 0.0;
  }
  m.validate();
  return m;
}

std::vector<std::uint8_t> to_bytes(const Tensor<float>& image) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(image.size()));
  for (Index i = 0; i < image.size(); ++i) {
    const float v = std::clamp(image[i], 0.0f, 1.0f);
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

Dataset::Dataset(DatasetManifest manifest) : manifest_(std::move(manifest)) {
  manifest_.validate();
  for (std::size_t s = 0; s < 3; ++s) {
    splits_[s] = manifest_.split_indices(static_cast<Split>(s));
  }
  pixels_.resize(manifest_.records.size() * image_bytes());
}

Dataset Dataset::render(DatasetManifest manifest) {
  Dataset d(std::move(manifest));
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto bytes =
        to_bytes(render_sample(d.manifest_.records[i].render_spec(), d.height(), d.width()));
    std::copy(bytes.begin(), bytes.end(), d.pixels_.begin() + static_cast<std::ptrdiff_t>(i * d.image_bytes()));
  }
  return d;
}

Dataset Dataset::load(DatasetManifest manifest, const std::filesystem::path& root) {
  Dataset d(std::move(manifest));
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& r = d.manifest_.records[i];
    const RgbImage img = read_png(root / r.image_path);
    if (img.height != d.height() || img.width != d.width()) {
      throw InputError(r.image_path + " does not match the manifest image size");
    }
    std::copy(img.planar.begin(), img.planar.end(),
              d.pixels_.begin() + static_cast<std::ptrdiff_t>(i * d.image_bytes()));
  }
  return d;
}

Dataset Dataset::load(const std::filesystem::path& root) {
  std::ifstream is(root / "manifest.txt");
  if (!is) throw InputError("cannot open " + (root / "manifest.txt").string());
  return load(DatasetManifest::load(is), root);
}

void Dataset::write(const std::filesystem::path& root) const {
  std::filesystem::create_directories(root / "images");
  for (std::size_t i = 0; i < size(); ++i) {
    write_png(root / manifest_.records[i].image_path, height(), width(), pixels(i));
  }
  std::ofstream os(root / "manifest.txt");
  manifest_.save(os);
  if (!os) throw std::runtime_error("failed writing manifest under " + root.string());
}

std::span<const std::uint8_t> Dataset::pixels(std::size_t record) const {
  if (record >= size()) throw std::out_of_range("record index out of range");
  return {pixels_.data() + record * image_bytes(), image_bytes()};
}

Tensor<float> Dataset::image(std::size_t record) const {
  const auto px = pixels(record);
  Tensor<float> out({3, height(), width()});
  for (std::size_t i = 0; i < px.size(); ++i) {
    out[static_cast<Index>(i)] = static_cast<float>(px[i]) / 255.0f;
  }
  return out;
}

template <typename Scalar>
Batch<Scalar> load_batch(const Dataset& data, Split split,
                         std::span<const std::size_t> positions,
                         const AugmentationPolicy& policy, Rng& rng) {
  const auto& members = data.split(split);
  if (positions.empty()) throw std::out_of_range("empty batch");
  const Index n = static_cast<Index>(positions.size());
  const Index per = 3 * static_cast<Index>(data.height()) * data.width();
  Batch<Scalar> b;
  b.images = Tensor<Scalar>({n, 3, data.height(), data.width()});
  const bool augment = split == Split::Train && policy.hue_jitter_max() > 0.0;
  for (Index i = 0; i < n; ++i) {
    const std::size_t pos = positions[static_cast<std::size_t>(i)];
    if (pos >= members.size()) {
      throw std::out_of_range("position " + std::to_string(pos) + " outside the " +
                              std::string(split_name(split)) + " split (size " +
                              std::to_string(members.size()) + ")");
    }
    const std::size_t record = members[pos];
    Tensor<float> img = data.image(record);
    if (augment) hue_jitter(img, policy.hue_jitter_max(), rng);
    b.images.data().segment(i * per, per) = img.data().template cast<Scalar>();
    const JerseyLabel label = data.manifest().records[record].label;
    b.labels.push_back(label);
    b.targets.push_back(encode_targets(label, data.classes()));
    b.target_indices.push_back(encode_indices(label, data.classes()));
  }
  return b;
}

template Batch<float> load_batch<float>(const Dataset&, Split, std::span<const std::size_t>,
                                        const AugmentationPolicy&, Rng&);
template Batch<double> load_batch<double>(const Dataset&, Split, std::span<const std::size_t>,
                                          const AugmentationPolicy&, Rng&);

}  // namespace jnr
