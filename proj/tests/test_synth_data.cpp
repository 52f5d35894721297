#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include "jnr/errors.hpp"
#include "jnr/synth_data.hpp"

using namespace jnr;

namespace {

std::vector<std::uint64_t> seeds(std::size_t n, std::uint64_t base = 100) {
  std::vector<std::uint64_t> s(n);
  std::iota(s.begin(), s.end(), base);
  return s;
}

double region_variance(const Tensor<float>& img, const PixelBox& b) {
  const Index h = img.dim(1), w = img.dim(2);
  double total = 0;
  for (Index c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    int n = 0;
    for (int y = b.y0; y < b.y1; ++y) {
      for (int x = b.x0; x < b.x1; ++x) {
        const double v = img[c * h * w + y * w + x];
        sum += v;
        sq += v * v;
        ++n;
      }
    }
    total += sq / n - (sum / n) * (sum / n);
  }
  return total / 3;
}

std::array<double, 3> hsv_at(const Tensor<float>& img, Index p) {
  const Index plane = img.dim(1) * img.dim(2);
  const Hsv h = rgb_to_hsv(img[p], img[plane + p], img[2 * plane + p]);
  return {h.h, h.s, h.v};
}

double hue_distance(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 1.0 - d);
}

}  // namespace

TEST_CASE("rendering is deterministic and in range") {
  RenderSpec s{JerseyLabel::number(72), 5, 9, 0.3, 0.8};
  const Tensor<float> a = render_sample(s, 64, 64);
  const Tensor<float> b = render_sample(s, 64, 64);
  CHECK(a.shape() == Shape{3, 64, 64});
  CHECK(a.data() == b.data());
  CHECK(a.data().minCoeff() >= 0.0f);
  CHECK(a.data().maxCoeff() <= 1.0f);
  s.noise_seed = 10;
  CHECK(render_sample(s, 64, 64).data() != a.data());
  CHECK_THROWS_AS(render_sample(s, 15, 64), ConfigError);
}

TEST_CASE("Null renders background only") {
  for (std::uint64_t style = 0; style < 10; ++style) {
    const RenderSpec null_spec{JerseyLabel::null(), style, style + 1, 0.0, 0.0};
    const RenderSpec digits{JerseyLabel::number(88), style, style + 1, 0.0, 0.0};
    CHECK(digit_box(null_spec, 64, 64).empty());
    const PixelBox box = digit_box(digits, 64, 64);
    REQUIRE_FALSE(box.empty());
    const double null_var = region_variance(render_sample(null_spec, 64, 64), box);
    const double digit_var = region_variance(render_sample(digits, 64, 64), box);
    // Background variance comes only from shading and pixel noise.
    CHECK(null_var < 2e-3);
    CHECK(digit_var > 10 * null_var);
  }
}

TEST_CASE("ink stays inside the digit box") {
  for (std::uint64_t style = 0; style < 20; ++style) {
    RenderSpec a{JerseyLabel::number(72), style, 3, 0.0, 0.0};
    RenderSpec b = a;
    b.label = JerseyLabel::number(38);
    const PixelBox box = digit_box(a, 64, 64);
    const Tensor<float> ia = render_sample(a, 64, 64), ib = render_sample(b, 64, 64);
    for (Index c = 0; c < 3; ++c) {
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
          if (y >= box.y0 && y < box.y1 && x >= box.x0 && x < box.x1) continue;
          const Index p = c * 4096 + y * 64 + x;
          REQUIRE(ia[p] == ib[p]);
        }
      }
    }
  }
}

TEST_CASE("full occlusion erases all label information") {
  // Same digit count means same box; with the box covered, labels render
  // identically, so any classifier is at chance on them.
  for (std::uint64_t style = 0; style < 10; ++style) {
    const RenderSpec a{JerseyLabel::number(72), style, 4, 1.0, 0.0};
    RenderSpec b = a;
    b.label = JerseyLabel::number(38);
    CHECK(render_sample(a, 64, 64).data() == render_sample(b, 64, 64).data());
    b.label = JerseyLabel::number(99);
    b.blur_sigma = 1.2;
    RenderSpec c = b;
    c.label = JerseyLabel::number(10);
    CHECK(render_sample(b, 48, 48).data() == render_sample(c, 48, 48).data());
  }
  RenderSpec partial{JerseyLabel::number(72), 1, 4, 0.5, 0.0};
  RenderSpec other = partial;
  other.label = JerseyLabel::number(38);
  CHECK(render_sample(partial, 64, 64).data() != render_sample(other, 64, 64).data());
}

TEST_CASE("HSV conversion round trip") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
    const auto rgb = hsv_to_rgb(rgb_to_hsv(r, g, b));
    CHECK(std::abs(rgb[0] - r) < 1e-12);
    CHECK(std::abs(rgb[1] - g) < 1e-12);
    CHECK(std::abs(rgb[2] - b) < 1e-12);
  }
  const Hsv red = rgb_to_hsv(1, 0, 0);
  CHECK(red.h == 0.0);
  CHECK(rgb_to_hsv(0, 1, 0).h == doctest::Approx(1.0 / 3));
  CHECK(rgb_to_hsv(0, 0, 1).h == doctest::Approx(2.0 / 3));
}

TEST_CASE("hue jitter") {
  const RenderSpec s{JerseyLabel::number(45), 2, 3, 0.2, 0.5};
  const Tensor<float> original = render_sample(s, 32, 32);

  SUBCASE("magnitude 0 is identity") {
    Tensor<float> img = original.clone();
    Rng rng(1);
    hue_jitter(img, 0.0, rng);
    CHECK((img.data() - original.data()).cwiseAbs().maxCoeff() <= 1e-6f);
  }
  SUBCASE("gray images are unchanged") {
    Tensor<float> gray({3, 16, 16});
    for (Index i = 0; i < 256; ++i) {
      const float v = static_cast<float>(i) / 255.0f;
      gray[i] = gray[256 + i] = gray[512 + i] = v;
    }
    const Tensor<float> before = gray.clone();
    Rng rng(2);
    for (int k = 0; k < 5; ++k) hue_jitter(gray, 0.5, rng);
    CHECK(gray.data() == before.data());
  }
  SUBCASE("two half turns restore the hue") {
    Tensor<float> img = original.clone();
    shift_hue(img, 0.5);
    shift_hue(img, 0.5);
    for (Index p = 0; p < 32 * 32; ++p) {
      const auto a = hsv_at(original, p), b = hsv_at(img, p);
      if (a[1] > 1e-3) CHECK(hue_distance(a[0], b[0]) < 1e-5);
    }
  }
  SUBCASE("only hue changes") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Tensor<float> img = original.clone();
      Rng rng(seed);
      hue_jitter(img, 0.4, rng);
      for (Index p = 0; p < 32 * 32; ++p) {
        const auto a = hsv_at(original, p), b = hsv_at(img, p);
        REQUIRE(std::abs(a[1] - b[1]) < 1e-5);
        REQUIRE(std::abs(a[2] - b[2]) < 1e-5);
      }
    }
  }
  SUBCASE("shift matches the modular oracle") {
    Tensor<float> img = original.clone();
    shift_hue(img, 0.3);
    for (Index p = 0; p < 32 * 32; ++p) {
      const auto a = hsv_at(original, p), b = hsv_at(img, p);
      if (a[1] > 1e-2 && a[2] > 1e-2) {
        const double expected = std::fmod(a[0] + 0.3, 1.0);
        REQUIRE(hue_distance(expected, b[0]) < 1e-4);
      }
    }
  }
  Tensor<float> img = original.clone();
  Rng rng(0);
  CHECK_THROWS(hue_jitter(img, 0.6, rng));
}

TEST_CASE("augmentation policy") {
  CHECK(AugmentationPolicy().hue_jitter_max() == 0.4);
  CHECK_FALSE(AugmentationPolicy().affine_enabled());
  CHECK_THROWS_AS(AugmentationPolicy(0.4, true), ConfigError);
  CHECK_THROWS_AS(AugmentationPolicy(0.7), ConfigError);
}

TEST_CASE("split sizes") {
  CHECK(split_sizes(810, {}) == std::array<std::size_t, 3>{567, 97, 146});
  CHECK(split_sizes(100, {}) == std::array<std::size_t, 3>{70, 12, 18});
  CHECK(split_sizes(10, {}) == std::array<std::size_t, 3>{7, 1, 2});
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = rng.below(5000);
    const auto s = split_sizes(n, {});
    CHECK(s[0] + s[1] + s[2] == n);
    CHECK(std::abs(static_cast<double>(s[0]) - 0.7 * n) < 1.0);
    CHECK(std::abs(static_cast<double>(s[1]) - 0.12 * n) < 1.0);
    CHECK(std::abs(static_cast<double>(s[2]) - 0.18 * n) < 1.0);
  }
  CHECK_THROWS_AS(split_sizes(10, {0.5, 0.5, 0.1}), ConfigError);
  CHECK_THROWS_AS(split_sizes(10, {1.0, 0.0, 0.0}), ConfigError);
}

TEST_CASE("uniform dataset generation") {
  const ClassSet classes = ClassSet::first_numbers(81);
  GeneratorParams params;
  params.master_seed = 11;
  const DatasetManifest m = generate_dataset(classes, uniform_counts(classes, 10), seeds(30), params);
  REQUIRE(m.records.size() == 810);
  CHECK(m.split_indices(Split::Train).size() == 567);
  CHECK(m.split_indices(Split::Val).size() == 97);
  CHECK(m.split_indices(Split::Test).size() == 146);

  std::map<JerseyLabel, int> counts;
  std::map<std::uint64_t, std::set<Split>> seed_splits;
  std::map<JerseyLabel, std::set<Split>> class_splits;
  std::set<std::string> paths;
  for (const auto& r : m.records) {
    ++counts[r.label];
    seed_splits[r.style_seed].insert(r.split);
    class_splits[r.label].insert(r.split);
    paths.insert(r.image_path);
  }
  CHECK(paths.size() == 810);
  for (const auto& l : classes.labels()) {
    CHECK(counts[l] == 10);
    CHECK(class_splits[l].size() == 3);
  }
  std::array<int, 3> seeds_per_split{};
  for (const auto& [seed, splits] : seed_splits) {
    REQUIRE(splits.size() == 1);
    ++seeds_per_split[static_cast<std::size_t>(*splits.begin())];
  }
  for (int n : seeds_per_split) CHECK(n >= 3);

  CHECK(generate_dataset(classes, uniform_counts(classes, 10), seeds(30), params) == m);
  params.master_seed = 12;
  CHECK_FALSE(generate_dataset(classes, uniform_counts(classes, 10), seeds(30), params) == m);
}

TEST_CASE("generation errors") {
  const ClassSet classes = ClassSet::first_numbers(5);
  const GeneratorParams params;
  // 21 seeds apportion as 14/2/5; 22 is the smallest count with 3 per split.
  CHECK_THROWS_AS(generate_dataset(classes, uniform_counts(classes, 4), seeds(21), params),
                  ConfigError);
  CHECK_NOTHROW(generate_dataset(classes, uniform_counts(classes, 4), seeds(22), params));
  std::vector<std::uint64_t> dup = seeds(30);
  dup[3] = dup[4];
  CHECK_THROWS_AS(generate_dataset(classes, uniform_counts(classes, 4), dup, params),
                  ConfigError);
  ClassCounts bad = uniform_counts(classes, 4);
  bad[JerseyLabel::number(50)] = 3;
  CHECK_THROWS_AS(generate_dataset(classes, bad, seeds(30), params), UnknownClassError);
}

TEST_CASE("imbalanced counts hit the ratio exactly") {
  const ClassSet classes = ClassSet::first_numbers(81);
  const ClassCounts c = imbalanced_counts(classes, 3, 92, 7);
  CHECK(c.size() == 81);
  int lo = 1 << 30, hi = 0;
  for (const auto& [label, n] : c) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  CHECK(lo == 3);
  CHECK(hi == 276);
  CHECK(hi == 92 * lo);
  CHECK(imbalanced_counts(classes, 3, 92, 7) == c);
  CHECK_FALSE(imbalanced_counts(classes, 3, 92, 8) == c);

  GeneratorParams params;
  const DatasetManifest m = generate_dataset(classes, c, seeds(40), params);
  std::map<JerseyLabel, int> got;
  for (const auto& r : m.records) ++got[r.label];
  CHECK(got == std::map<JerseyLabel, int>(c.begin(), c.end()));
}

TEST_CASE("manifest round trip") {
  const ClassSet classes = ClassSet::first_numbers(12);
  GeneratorParams params;
  params.image_height = params.image_width = 24;
  params.occlusion_probability = 0.5;
  params.occlusion_max = 0.6;
  params.blur_max = 1.1;
  params.master_seed = 3;
  const DatasetManifest m = generate_dataset(classes, uniform_counts(classes, 5), seeds(25), params);
  std::stringstream ss;
  m.save(ss);
  const DatasetManifest back = DatasetManifest::load(ss);
  CHECK(back == m);
  CHECK(back.content_hash() == m.content_hash());
  CHECK(m.content_hash().size() == 16);

  DatasetManifest changed = m;
  changed.records[0].noise_seed ^= 1;
  CHECK(changed.content_hash() != m.content_hash());

  std::stringstream crossing;
  DatasetManifest leaked = m;
  const auto val = m.split_indices(Split::Val).front();
  leaked.records[m.split_indices(Split::Train).front()].style_seed = m.records[val].style_seed;
  CHECK_THROWS_AS(leaked.validate(), ConfigError);

  std::stringstream bad("# jnr-manifest 1\n# classes null 1\nimages/0.png 7 1 train 0 0 0\n");
  CHECK_THROWS_AS(DatasetManifest::load(bad), ConfigError);
  std::stringstream garbled("# jnr-manifest 1\n# classes null 1\nimages/0.png 1 x train\n");
  try {
    DatasetManifest::load(garbled);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("dataset write/load preserves pixels") {
  const ClassSet classes = ClassSet::first_numbers(4);
  GeneratorParams params;
  params.image_height = 20;
  params.image_width = 28;
  const Dataset d = Dataset::render(
      generate_dataset(classes, uniform_counts(classes, 5), seeds(22), params));
  const auto root = std::filesystem::temp_directory_path() / "jnr_test_synth_roundtrip";
  std::filesystem::remove_all(root);
  d.write(root);
  const Dataset back = Dataset::load(root);
  CHECK(back.manifest() == d.manifest());
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto a = d.pixels(i), b = back.pixels(i);
    REQUIRE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  std::filesystem::remove_all(root);
  CHECK_THROWS_AS(Dataset::load(root), InputError);
}

TEST_CASE("load_batch") {
  const ClassSet classes = ClassSet::first_numbers(20);
  GeneratorParams params;
  params.image_height = params.image_width = 24;
  const Dataset d = Dataset::render(
      generate_dataset(classes, uniform_counts(classes, 6), seeds(25), params));
  const AugmentationPolicy policy;
  Rng rng(1);
  const std::vector<std::size_t> pos{0, 3, 1, 3};

  const Batch<float> val = load_batch<float>(d, Split::Val, pos, policy, rng);
  CHECK(val.images.shape() == Shape{4, 3, 24, 24});
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const auto px = d.pixels(d.split(Split::Val)[pos[i]]);
    for (std::size_t j = 0; j < px.size(); ++j) {
      REQUIRE(val.images[static_cast<Index>(i * px.size() + j)] ==
              static_cast<float>(px[j]) / 255.0f);
    }
  }

  const Batch<double> train = load_batch<double>(d, Split::Train, pos, policy, rng);
  const auto px0 = d.pixels(d.split(Split::Train)[0]);
  double diff = 0;
  for (std::size_t j = 0; j < px0.size(); ++j) {
    diff = std::max(diff, std::abs(train.images[static_cast<Index>(j)] - px0[j] / 255.0));
  }
  CHECK(diff > 0.0);
  const Batch<double> plain =
      load_batch<double>(d, Split::Train, pos, AugmentationPolicy::none(), rng);
  CHECK(plain.images[0] == static_cast<double>(static_cast<float>(px0[0]) / 255.0f));

  for (std::size_t i = 0; i < train.labels.size(); ++i) {
    const TargetTriple& t = train.targets[i];
    REQUIRE(one_hot_index(t.y).has_value());
    REQUIRE(one_hot_index(t.y1).has_value());
    REQUIRE(one_hot_index(t.y2).has_value());
    CHECK(classes[static_cast<std::size_t>(*one_hot_index(t.y))] == train.labels[i]);
    CHECK(compose_digits(DigitClass::from_index(*one_hot_index(t.y1)),
                         DigitClass::from_index(*one_hot_index(t.y2))) == train.labels[i]);
    CHECK(t.indices() == train.target_indices[i]);
    CHECK(train.labels[i] == d.manifest().records[d.split(Split::Train)[pos[i]]].label);
  }

  const std::vector<std::size_t> bad{d.split(Split::Test).size()};
  CHECK_THROWS_AS(load_batch<float>(d, Split::Test, bad, policy, rng), std::out_of_range);
}
