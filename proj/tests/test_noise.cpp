#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "padst/lexicon.hpp"
#include "padst/noise.hpp"
#include "padst/text.hpp"

using namespace padst;

namespace {

std::vector<std::string> table_names() {
  std::ifstream in(std::filesystem::path(PADST_SOURCE_DIR) / "data/fixtures/reference_rows.tsv");
  std::vector<std::string> names;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (!line.empty()) names.push_back(line.substr(0, line.find('\t')));
  }
  return names;
}

PolarityLexicon tiny_lexicon() {
  PolarityLexicon lex;
  lex.insert("good", 1.9);
  lex.insert("bad", -2.5);
  return lex;
}

}  // namespace

TEST(NoiseSpec, RoundTripsAllTableNames) {
  auto names = table_names();
  ASSERT_EQ(names.size(), 22u);
  for (const auto& n : names) {
    auto spec = parse_noise_spec(n);
    EXPECT_EQ(render_noise_spec(spec), n);
    EXPECT_EQ(parse_noise_spec(render_noise_spec(spec)), spec);
  }
}

TEST(NoiseSpec, ParsesDigitGroups) {
  auto s = parse_noise_spec("WG03P08-AG025P1-M");
  EXPECT_DOUBLE_EQ(s.pretrain.general, 0.3);
  EXPECT_DOUBLE_EQ(s.pretrain.polarity, 0.8);
  EXPECT_DOUBLE_EQ(s.finetune.general, 0.25);
  EXPECT_DOUBLE_EQ(s.finetune.polarity, 1.0);
  EXPECT_EQ(s.mode, NoiseMode::mask);
  EXPECT_TRUE(parse_noise_spec("W-A-D").is_zero());
  EXPECT_EQ(render_noise_spec(parse_noise_spec("WG1-A-D")), "WG1-A-D");
}

TEST(NoiseSpec, ErrorsPointAtOffendingCharacter) {
  for (auto [bad, pos] : std::vector<std::pair<std::string, std::size_t>>{
           {"WG03-AG03-X", 10}, {"XG03-AG03-D", 0}, {"WG-A-D", 2}, {"WG03P08", 7},
           {"WG03-AG03-DD", 11}, {"WP2-A-D", 2}}) {
    try {
      parse_noise_spec(bad);
      ADD_FAILURE() << bad;
    } catch (const NoiseSpecError& e) {
      EXPECT_EQ(e.position(), pos) << bad << ": " << e.what();
    }
  }
}

TEST(Noise, EmpiricalRatesWithinThreeSigma) {
  const auto lex = tiny_lexicon();
  const std::size_t n = 10000;
  for (NoiseMode mode : {NoiseMode::remove, NoiseMode::mask}) {
    for (bool polarity_class : {false, true}) {
      const double p = polarity_class ? 0.8 : 0.3;
      const double other = polarity_class ? 0.3 : 0.8;
      NoiseProbabilities probs = polarity_class ? NoiseProbabilities{other, p}
                                                : NoiseProbabilities{p, other};
      // One class under test; sentences of 10 tokens, 1000 sentences.
      std::mt19937_64 rng(polarity_class * 2 + (mode == NoiseMode::mask));
      std::size_t corrupted = 0, seen = 0;
      for (std::size_t s = 0; s < n / 10; ++s) {
        Tokens t;
        for (int i = 0; i < 10; ++i) {
          t.push_back(polarity_class ? (i % 2 ? "good" : "bad") : "w" + std::to_string(i));
        }
        NoiseCounts c;
        auto out = apply_noise(t, lex, probs, mode, rng, &c);
        const auto& seen_c = polarity_class ? c.polarity_seen : c.general_seen;
        const auto& corr_c = polarity_class ? c.polarity_corrupted : c.general_corrupted;
        seen += seen_c;
        corrupted += corr_c;
        if (mode == NoiseMode::mask) {
          ASSERT_EQ(out.size(), t.size());
          EXPECT_EQ(static_cast<std::size_t>(std::count(out.begin(), out.end(), "<mask>")),
                    corr_c);
        } else if (corr_c < t.size()) {
          EXPECT_EQ(out.size(), t.size() - corr_c);
        } else {
          EXPECT_EQ(out.size(), 1u);
        }
      }
      ASSERT_EQ(seen, n);
      const double sigma = std::sqrt(n * p * (1 - p));
      EXPECT_LE(std::abs(static_cast<double>(corrupted) - n * p), 3 * sigma)
          << (polarity_class ? "polarity " : "general ") << (mode == NoiseMode::mask ? "M" : "D");
    }
  }
}

TEST(Noise, DeletionNeverEmpties) {
  const auto lex = tiny_lexicon();
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(apply_noise({"good", "x"}, lex, {1.0, 1.0}, NoiseMode::remove, rng).size(), 1u);
  }
  EXPECT_TRUE(apply_noise({}, lex, {1.0, 1.0}, NoiseMode::remove, rng).empty());
}

TEST(Noise, ZeroProbabilityIsIdentity) {
  const auto lex = tiny_lexicon();
  std::mt19937_64 rng(4);
  Tokens t{"the", "good", "food"};
  EXPECT_EQ(apply_noise(t, lex, {}, NoiseMode::remove, rng), t);
}

TEST(Noise, DenoisingPairsDeterministicAndChecked) {
  const auto lex = tiny_lexicon();
  std::vector<Tokens> mid{{"a", "good", "b"}, {"c", "bad"}};
  std::vector<Tokens> clean{{"A", "good", "B"}, {"C", "bad"}};
  auto p1 = make_denoising_pairs(mid, clean, lex, {0.5, 0.5}, NoiseMode::mask, 9);
  auto p2 = make_denoising_pairs(mid, clean, lex, {0.5, 0.5}, NoiseMode::mask, 9);
  ASSERT_EQ(p1.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(p1[i].noised, p2[i].noised);
    EXPECT_EQ(p1[i].clean, clean[i]);
  }
  std::vector<Tokens> short_clean{clean[0]};
  EXPECT_THROW(make_denoising_pairs(mid, short_clean, lex, {}, NoiseMode::mask, 9), DataError);
}
