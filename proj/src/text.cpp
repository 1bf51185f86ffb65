#include "padst/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "padst/errors.hpp"
#include "padst/lexicon.hpp"

namespace padst {

Sentiment opposite(Sentiment s) {
  switch (s) {
    case Sentiment::pos:
      return Sentiment::neg;
    case Sentiment::neg:
      return Sentiment::pos;
    default:
      throw std::invalid_argument("opposite: sentence has no sentiment label");
  }
}

std::string_view to_string(Sentiment s) {
  switch (s) {
    case Sentiment::pos:
      return "pos";
    case Sentiment::neg:
      return "neg";
    default:
      return "unlabeled";
  }
}

Sentiment parse_sentiment(std::string_view text) {
  if (text == "pos") return Sentiment::pos;
  if (text == "neg") return Sentiment::neg;
  if (text == "unlabeled") return Sentiment::unlabeled;
  throw DataError("unknown sentiment label '" + std::string(text) + "'");
}

std::string join(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

namespace {

constexpr std::string_view kReservedTokens[] = {special::pad,  special::unk, special::bos,
                                          special::eos,  special::mask, special::pos,
                                          special::neg};

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 128 && std::ispunct(c) != 0; }

}  // namespace

Tokens tokenize(std::string_view text) {
  std::string lowered(text);
  for (char& c : lowered) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 128) c = static_cast<char>(std::tolower(u));
  }
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < lowered.size();) {
    const auto c = static_cast<unsigned char>(lowered[i]);
    if (is_space(c)) {
      flush();
      ++i;
      continue;
    }
    if (c == '<') {
      bool matched = false;
      for (std::string_view r : kReservedTokens) {
        if (std::string_view(lowered).substr(i).starts_with(r)) {
          flush();
          out.emplace_back(r);
          i += r.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    if (is_punct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
      ++i;
      continue;
    }
    current += static_cast<char>(c);
    ++i;
  }
  flush();
  return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    auto b = current.find_first_not_of(" \t\r\n");
    auto e = current.find_last_not_of(" \t\r\n");
    if (b != std::string::npos) out.push_back(current.substr(b, e - b + 1));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    current += text[i];
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') && i + 1 < text.size() &&
        is_space(static_cast<unsigned char>(text[i + 1]))) {
      flush();
    }
  }
  flush();
  return out;
}

// ---------------------------------------------------------------- Vocab

Vocab::Vocab() {
  for (std::string_view r : kReservedTokens) add(r);
}

int Vocab::add(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocab id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocab::decode(std::span<const int> ids) const {
  Tokens out;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos || id == kPos || id == kNeg) continue;
    out.push_back(token(id));
  }
  return out;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  if (tokens.size() < static_cast<std::size_t>(kReserved)) {
    throw DataError("vocabulary is missing reserved tokens");
  }
  for (int i = 0; i < kReserved; ++i) {
    if (tokens[static_cast<std::size_t>(i)] != v.tokens_[static_cast<std::size_t>(i)]) {
      throw DataError("vocabulary reserved id " + std::to_string(i) + " is '" +
                      tokens[static_cast<std::size_t>(i)] + "'");
    }
  }
  for (std::size_t i = kReserved; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw DataError("duplicate vocabulary token " + tokens[i]);
    v.add(tokens[i]);
  }
  return v;
}

// ---------------------------------------------------------------- Corpus

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::valid:
      return "valid";
    default:
      return "test";
  }
}

std::size_t Corpus::count(Sentiment s) const {
  return static_cast<std::size_t>(std::count_if(
      sentences.begin(), sentences.end(), [s](const Sentence& x) { return x.sentiment == s; }));
}

std::vector<Sentence> Corpus::with_label(Sentiment s) const {
  std::vector<Sentence> out;
  for (const auto& x : sentences) {
    if (x.sentiment == s) out.push_back(x);
  }
  return out;
}

CorpusFormat format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") return CorpusFormat::jsonl;
  if (ext == ".tsv") return CorpusFormat::tsv;
  throw ConfigError("cannot infer corpus format of " + path.string() +
                    " (expected .jsonl or .tsv)");
}

Corpus parse_corpus(std::istream& in, CorpusFormat format, Split split,
                    std::string_view source_name) {
  Corpus corpus;
  corpus.split = split;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(std::string(source_name) + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Sentence s;
    std::string text;
    try {
      if (format == CorpusFormat::jsonl) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
          fail(std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
          fail("expected an object with a string field 'text'");
        }
        text = j["text"].get<std::string>();
        if (j.contains("sentiment") && !j["sentiment"].is_null()) {
          if (!j["sentiment"].is_string()) fail("field 'sentiment' must be a string");
          s.sentiment = parse_sentiment(j["sentiment"].get<std::string>());
        }
        if (j.contains("id") && !j["id"].is_null()) {
          if (!j["id"].is_string()) fail("field 'id' must be a string");
          s.source_id = j["id"].get<std::string>();
        }
      } else {
        const auto tab = line.find('\t');
        if (tab == std::string::npos) fail("expected 'sentiment<TAB>text'");
        s.sentiment = parse_sentiment(std::string_view(line).substr(0, tab));
        text = line.substr(tab + 1);
      }
    } catch (const DataError& e) {
      const std::string what = e.what();
      if (what.rfind(std::string(source_name) + ":", 0) == 0) throw;
      fail(what);
    }
    s.tokens = tokenize(text);
    if (s.tokens.empty()) fail("empty sentence");
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

void format_corpus(std::ostream& out, const Corpus& corpus, CorpusFormat format) {
  for (const auto& s : corpus.sentences) {
    if (format == CorpusFormat::jsonl) {
      nlohmann::json j;
      j["text"] = s.text();
      if (s.sentiment != Sentiment::unlabeled) j["sentiment"] = std::string(to_string(s.sentiment));
      if (s.source_id) j["id"] = *s.source_id;
      out << j.dump() << '\n';
    } else {
      out << to_string(s.sentiment) << '\t' << s.text() << '\n';
    }
  }
}

Corpus read_corpus(const std::filesystem::path& path, CorpusFormat format, Split split) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path.string());
  return parse_corpus(in, format, split, path.string());
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  format_corpus(out, corpus, format);
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Tokens> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Tokens> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(tokenize(line));
  return out;
}

void write_lines(const std::vector<Tokens>& lines, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& l : lines) out << join(l) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------- filtering

std::string_view to_string(FilterVerdict v) {
  switch (v) {
    case FilterVerdict::kept:
      return "kept";
    case FilterVerdict::too_short:
      return "too_short";
    case FilterVerdict::repetitive:
      return "repetitive";
    default:
      return "low_polarity";
  }
}

bool is_repetitive(const Tokens& tokens, std::size_t rep_limit) {
  std::size_t run = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    run = (i > 0 && tokens[i] == tokens[i - 1]) ? run + 1 : 1;
    if (run > rep_limit) return true;
  }
  if (tokens.size() >= 6) {
    std::map<std::string_view, std::size_t> counts;
    for (const auto& t : tokens) {
      if (2 * ++counts[t] > tokens.size()) return true;
    }
  }
  return false;
}

FilterVerdict classify_for_dataset(const Tokens& tokens, double score, const FilterConfig& cfg) {
  if (tokens.size() < cfg.min_len) return FilterVerdict::too_short;
  if (is_repetitive(tokens, cfg.rep_limit)) return FilterVerdict::repetitive;
  if (score == 0.0 || std::abs(score) < cfg.polarity_threshold) return FilterVerdict::low_polarity;
  return FilterVerdict::kept;
}

Corpus filter_dataset(std::span<const ScoredSentence> raw, const FilterConfig& cfg) {
  Corpus out;
  for (const auto& r : raw) {
    if (classify_for_dataset(r.tokens, r.score, cfg) != FilterVerdict::kept) continue;
    out.sentences.push_back(
        {r.tokens, r.score > 0 ? Sentiment::pos : Sentiment::neg, r.source_id});
  }
  return out;
}

DatasetSplits split_dataset(const Corpus& all, std::size_t valid_per_label,
                            std::size_t test_per_label, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DatasetSplits out;
  out.train.split = Split::train;
  out.valid.split = Split::valid;
  out.test.split = Split::test;
  std::set<std::string> reserved;
  for (Sentiment label : {Sentiment::pos, Sentiment::neg}) {
    std::vector<std::size_t> idx;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < all.sentences.size(); ++i) {
      const auto& s = all.sentences[i];
      if (s.sentiment == label && seen.insert(s.text()).second) idx.push_back(i);
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    if (idx.size() < valid_per_label + test_per_label) {
      throw DataError("split_dataset: only " + std::to_string(idx.size()) + " distinct " +
                      std::string(to_string(label)) + " sentences");
    }
    for (std::size_t i = 0; i < test_per_label; ++i) {
      out.test.sentences.push_back(all.sentences[idx[i]]);
      reserved.insert(all.sentences[idx[i]].text());
    }
    for (std::size_t i = test_per_label; i < test_per_label + valid_per_label; ++i) {
      out.valid.sentences.push_back(all.sentences[idx[i]]);
      reserved.insert(all.sentences[idx[i]].text());
    }
  }
  for (const auto& s : all.sentences) {
    if (!reserved.count(s.text())) out.train.sentences.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------- synthetic

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec spec;
  try {
    spec.templates = j.at("templates").get<std::vector<std::string>>();
    if (j.contains("slots")) {
      spec.slots = j["slots"].get<std::map<std::string, std::vector<std::string>>>();
    }
    if (j.contains("pivots")) spec.pivots = j["pivots"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("synthetic spec: ") + e.what());
  }
  return spec;
}

SyntheticSpec SyntheticSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Corpus make_synthetic_corpus(const SyntheticSpec& spec, const PolarityLexicon& lexicon,
                             std::size_t n, std::uint64_t seed) {
  if (spec.templates.empty()) throw std::invalid_argument("synthetic corpus: no templates");
  const PolarityLexicon pool =
      spec.pivots.empty() ? lexicon : lexicon.restricted_to(spec.pivots);
  const auto pos_words = pool.words(Sentiment::pos);
  const auto neg_words = pool.words(Sentiment::neg);
  if (pos_words.empty() || neg_words.empty()) {
    throw std::invalid_argument("synthetic corpus: lexicon needs pos and neg entries");
  }
  for (const auto& t : spec.templates) {
    if (t.find("{pivot}") == std::string::npos) {
      throw std::invalid_argument("synthetic corpus: template without {pivot}: " + t);
    }
  }
  std::mt19937_64 rng(seed);
  auto pick = [&rng](std::size_t size) {
    return std::uniform_int_distribution<std::size_t>(0, size - 1)(rng);
  };
  Corpus corpus;
  for (std::size_t i = 0; i < 2 * n; ++i) {
    const Sentiment label = i % 2 == 0 ? Sentiment::pos : Sentiment::neg;
    const auto& words = label == Sentiment::pos ? pos_words : neg_words;
    std::istringstream tpl(spec.templates[pick(spec.templates.size())]);
    Sentence s;
    s.sentiment = label;
    std::string part;
    while (tpl >> part) {
      std::string fill;
      if (part == "{pivot}") {
        fill = words[pick(words.size())];
      } else if (part.size() > 2 && part.front() == '{' && part.back() == '}') {
        auto it = spec.slots.find(part.substr(1, part.size() - 2));
        if (it == spec.slots.end() || it->second.empty()) {
          throw std::invalid_argument("synthetic corpus: unknown slot " + part);
        }
        fill = it->second[pick(it->second.size())];
      } else {
        fill = part;
      }
      for (auto& t : tokenize(fill)) s.tokens.push_back(std::move(t));
    }
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace padst
