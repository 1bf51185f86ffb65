#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "padst/errors.hpp"
#include "padst/lexicon.hpp"
#include "padst/text.hpp"

using namespace padst;

namespace {

std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(PADST_SOURCE_DIR) / "data" / "fixtures" / name;
}

}  // namespace

TEST(Tokenize, SplitsPunctuationAndLowercases) {
  EXPECT_EQ(tokenize("The FOOD was great!!"),
            (Tokens{"the", "food", "was", "great", "!", "!"}));
  EXPECT_EQ(tokenize("  don't  "), (Tokens{"don", "'", "t"}));
  EXPECT_EQ(tokenize("a <mask> b"), (Tokens{"a", "<mask>", "b"}));
  EXPECT_TRUE(tokenize("   ").empty());
}

TEST(SplitSentences, BreaksAfterTerminators) {
  auto s = split_sentences("Good food. Bad service! Why? ok");
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0], "Good food.");
  EXPECT_EQ(s[3], "ok");
}

TEST(Vocab, ReservedIdsAndRoundTrip) {
  Vocab v;
  EXPECT_EQ(v.size(), static_cast<std::size_t>(Vocab::kReserved));
  EXPECT_EQ(v.token(Vocab::kPad), special::pad);
  EXPECT_EQ(v.token(Vocab::kNeg), special::neg);
  const int a = v.add("food");
  EXPECT_EQ(v.add("food"), a);
  EXPECT_EQ(v.id("missing"), Vocab::kUnk);
  std::vector<int> ids{Vocab::kBos, a, Vocab::kMask, Vocab::kPad, Vocab::kEos};
  EXPECT_EQ(v.decode(ids), (Tokens{"food", "<mask>"}));
  EXPECT_EQ(Vocab::from_tokens(v.tokens()).tokens(), v.tokens());
  EXPECT_THROW(Vocab::from_tokens({"food"}), std::exception);
}

TEST(Corpus, JsonlAndTsvRoundTrip) {
  Corpus c;
  c.sentences.push_back({{"good", "food"}, Sentiment::pos, "r1"});
  c.sentences.push_back({{"bad", "\"", "food"}, Sentiment::neg, std::nullopt});
  for (auto fmt : {CorpusFormat::jsonl, CorpusFormat::tsv}) {
    std::stringstream ss;
    format_corpus(ss, c, fmt);
    auto back = parse_corpus(ss, fmt, Split::train);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.sentences[0].tokens, c.sentences[0].tokens);
    EXPECT_EQ(back.sentences[1].tokens, c.sentences[1].tokens);
    EXPECT_EQ(back.sentences[1].sentiment, Sentiment::neg);
  }
  EXPECT_EQ(c.count(Sentiment::pos), 1u);
}

TEST(Corpus, MalformedInputNamesLine) {
  std::stringstream ss("{\"text\": \"ok\", \"label\": \"pos\"}\n{not json\n");
  try {
    parse_corpus(ss, CorpusFormat::jsonl, Split::train, "x.jsonl");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos) << e.what();
  }
}

TEST(Filter, RejectsRepetitionExample) {
  FilterConfig cfg;
  EXPECT_EQ(classify_for_dataset(tokenize("no no no no thanks thanks ."), 0.9, cfg),
            FilterVerdict::repetitive);
  ScoredSentence s{tokenize("no no no no thanks thanks ."), 0.9, std::nullopt};
  EXPECT_EQ(filter_dataset(std::span(&s, 1), cfg).size(), 0u);
}

TEST(Filter, RejectsEverySentenceUnderFiveTokens) {
  FilterConfig cfg;
  const Tokens pool{"great", "food", ".", "!", "the", "bad"};
  for (std::size_t len = 0; len < 5; ++len) {
    for (std::size_t start = 0; start < pool.size(); ++start) {
      Tokens t;
      for (std::size_t i = 0; i < len; ++i) t.push_back(pool[(start + i) % pool.size()]);
      for (double score : {-1.0, 1.0}) {
        EXPECT_EQ(classify_for_dataset(t, score, cfg), FilterVerdict::too_short);
      }
    }
  }
}

TEST(Filter, AdversarialFixtureClassifiedExactly) {
  std::ifstream in(fixture("filter_adversarial.tsv"));
  ASSERT_TRUE(in);
  std::string line;
  std::size_t cases = 0;
  FilterConfig cfg;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string expected, score, text;
    std::getline(fields, expected, '\t');
    std::getline(fields, score, '\t');
    std::getline(fields, text);
    const auto verdict = classify_for_dataset(tokenize(text), std::stod(score), cfg);
    EXPECT_EQ(to_string(verdict), expected) << text;
    ScoredSentence s{tokenize(text), std::stod(score), std::nullopt};
    auto kept = filter_dataset(std::span(&s, 1), cfg);
    EXPECT_EQ(kept.size(), expected == "kept" ? 1u : 0u) << text;
    if (kept.size() == 1) {
      EXPECT_EQ(kept.sentences[0].sentiment,
                std::stod(score) > 0 ? Sentiment::pos : Sentiment::neg);
    }
    ++cases;
  }
  EXPECT_GE(cases, 20u);
}

TEST(SplitDataset, DisjointAndBalanced) {
  Corpus all;
  for (int i = 0; i < 30; ++i) {
    all.sentences.push_back({{"good", std::to_string(i)}, Sentiment::pos, std::nullopt});
    all.sentences.push_back({{"bad", std::to_string(i)}, Sentiment::neg, std::nullopt});
  }
  auto s = split_dataset(all, 3, 5, 7);
  EXPECT_EQ(s.valid.count(Sentiment::pos), 3u);
  EXPECT_EQ(s.test.count(Sentiment::neg), 5u);
  EXPECT_EQ(s.train.size(), 60u - 16u);
  std::set<std::string> held;
  for (const auto& x : s.valid.sentences) held.insert(x.text());
  for (const auto& x : s.test.sentences) EXPECT_TRUE(held.insert(x.text()).second);
  for (const auto& x : s.train.sentences) EXPECT_FALSE(held.count(x.text()));
  auto again = split_dataset(all, 3, 5, 7);
  EXPECT_EQ(again.test, s.test);
}

TEST(Synthetic, UsesOnlyListedPivotsAndIsDeterministic) {
  auto lex = load_lexicon(fixture("lexicon_en.tsv"));
  auto spec = SyntheticSpec::load(fixture("synthetic_reviews.json"));
  auto a = make_synthetic_corpus(spec, lex, 50, 3);
  auto b = make_synthetic_corpus(spec, lex, 50, 3);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.count(Sentiment::pos), 50u);
  EXPECT_EQ(a.count(Sentiment::neg), 50u);
  const std::set<std::string> pivots(spec.pivots.begin(), spec.pivots.end());
  for (const auto& s : a.sentences) {
    bool found = false;
    for (const auto& t : s.tokens) {
      auto e = lex.find(t);
      if (!e) continue;
      EXPECT_TRUE(pivots.count(t)) << t;
      EXPECT_EQ(e->label, s.sentiment) << s.text();
      found = true;
    }
    EXPECT_TRUE(found) << s.text();
  }
}
