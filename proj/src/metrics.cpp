#include "padst/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "padst/errors.hpp"
#include "padst/text.hpp"

namespace padst {

namespace {

std::string gram_key(const Tokens& t, std::size_t begin, std::size_t n) {
  std::string key;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) key += '\x1f';
    key += t[begin + i];
  }
  return key;
}

std::unordered_map<std::string, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
  std::unordered_map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++counts[gram_key(t, i, n)];
  return counts;
}

std::string history(const std::string& a, const std::string& b) { return a + '\x1f' + b; }

double mean(std::span<const double> xs) {
  double s = 0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

Tokens mask_pivots(const Tokens& tokens, const PolarityLexicon& lexicon) {
  Tokens out = tokens;
  for (auto& t : out) {
    if (lexicon.is_pivot(t) != Polarity::none) t = std::string(special::mask);
  }
  return out;
}

double bleu(const Tokens& hypothesis, const Tokens& reference, int max_n) {
  if (reference.empty()) throw std::invalid_argument("bleu: empty reference");
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be positive");
  if (hypothesis.empty()) return 0.0;
  double log_sum = 0;
  int orders = 0;
  for (std::size_t n = 1; n <= static_cast<std::size_t>(max_n); ++n) {
    if (hypothesis.size() < n) break;
    const auto hyp = ngram_counts(hypothesis, n);
    const auto ref = ngram_counts(reference, n);
    double matched = 0;
    for (const auto& [gram, count] : hyp) {
      auto it = ref.find(gram);
      if (it != ref.end()) matched += static_cast<double>(std::min(count, it->second));
    }
    if (matched == 0) {
      if (n == 1) return 0.0;
      matched = 0.1;
    }
    log_sum += std::log(matched / static_cast<double>(hypothesis.size() - n + 1));
    ++orders;
  }
  const double c = static_cast<double>(hypothesis.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_sum / orders);
}

double mask_bleu(const Tokens& hypothesis, const Tokens& source, const PolarityLexicon& lexicon) {
  return bleu(mask_pivots(hypothesis, lexicon), mask_pivots(source, lexicon));
}

double LexiconClassifier::score(const Tokens& sentence) const {
  double s = 0;
  for (const auto& t : sentence) {
    if (auto e = lexicon_.find(t)) s += e->score;
  }
  return s / std::sqrt(s * s + alpha_);
}

void TfidfEmbedder::fit(std::span<const Tokens> corpus) {
  df_.clear();
  documents_ = corpus.size();
  for (const auto& doc : corpus) {
    std::vector<std::string> uniq(doc.begin(), doc.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (const auto& t : uniq) ++df_[t];
  }
}

double TfidfEmbedder::idf(const std::string& token) const {
  auto it = df_.find(token);
  const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((1.0 + static_cast<double>(documents_)) / (1.0 + df)) + 1.0;
}

Embedding TfidfEmbedder::embed(const Tokens& sentence) const {
  Embedding v;
  for (const auto& t : sentence) v[t] += 1.0;
  double norm = 0;
  for (auto& [t, x] : v) {
    x *= idf(t);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm > 0) {
    for (auto& [t, x] : v) x /= norm;
  }
  return v;
}

ExternalEmbedder ExternalEmbedder::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embeddings file " + path.string());
  ExternalEmbedder e;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected sentence<TAB>vector");
    }
    std::istringstream values(line.substr(tab + 1));
    std::vector<double> vec;
    double x;
    while (values >> x) vec.push_back(x);
    if (!values.eof() || vec.empty()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed vector");
    }
    e.add(line.substr(0, tab), std::move(vec));
  }
  return e;
}

void ExternalEmbedder::add(const std::string& sentence, std::vector<double> vector) {
  vectors_[sentence] = std::move(vector);
}

Embedding ExternalEmbedder::embed(const Tokens& sentence) const {
  const std::string key = join(sentence);
  auto it = vectors_.find(key);
  if (it == vectors_.end()) throw DataError("no external embedding for sentence '" + key + "'");
  double norm = 0;
  for (double x : it->second) norm += x * x;
  norm = std::sqrt(norm);
  Embedding v;
  for (std::size_t i = 0; i < it->second.size(); ++i) {
    v[std::to_string(i)] = norm > 0 ? it->second[i] / norm : 0.0;
  }
  return v;
}

void TrigramLM::train(std::span<const Tokens> corpus) {
  for (const auto& s : corpus) {
    std::string a = "<s>", b = "<s>";
    for (const auto& w : s) {
      ++vocab_[w];
      ++context_[history(a, b)];
      ++trigram_[history(a, b) + '\x1e' + w];
      a = std::move(b);
      b = w;
    }
  }
}

double TrigramLM::logprob(const Tokens& sentence) const {
  const double v = static_cast<double>(vocabulary());
  double total = 0;
  std::string a = "<s>", b = "<s>";
  for (const auto& w : sentence) {
    const std::string h = history(a, b);
    auto c = context_.find(h);
    auto t = trigram_.find(h + '\x1e' + w);
    const double num = (t == trigram_.end() ? 0.0 : static_cast<double>(t->second)) + k_;
    const double den = (c == context_.end() ? 0.0 : static_cast<double>(c->second)) + k_ * v;
    total += std::log(num / den);
    a = std::move(b);
    b = w;
  }
  return total;
}

double cosine(const Embedding& a, const Embedding& b, std::vector<std::string>* warnings) {
  double na = 0, nb = 0, dot = 0;
  for (const auto& [k, x] : a) {
    na += x * x;
    auto it = b.find(k);
    if (it != b.end()) dot += x * it->second;
  }
  for (const auto& [k, x] : b) nb += x * x;
  if (na == 0 || nb == 0) {
    if (warnings) warnings->push_back("zero embedding vector; similarity set to 0");
    return 0.0;
  }
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double similarity(const Tokens& a, const Tokens& b, const Embedder& embedder,
                  std::vector<std::string>* warnings) {
  return cosine(embedder.embed(a), embedder.embed(b), warnings);
}

double mask_sim(const Tokens& a, const Tokens& b, const Embedder& embedder,
                const PolarityLexicon& lexicon, std::vector<std::string>* warnings) {
  return similarity(mask_pivots(a, lexicon), mask_pivots(b, lexicon), embedder, warnings);
}

double style_accuracy(std::span<const double> scores, std::span<const Sentiment> targets) {
  if (scores.empty()) throw std::invalid_argument("style accuracy of an empty output set");
  if (scores.size() != targets.size()) {
    throw std::invalid_argument("style accuracy: score and target counts differ");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if ((targets[i] == Sentiment::pos && scores[i] > 0) ||
        (targets[i] == Sentiment::neg && scores[i] < 0)) {
      ++hit;
    }
  }
  return 100.0 * static_cast<double>(hit) / static_cast<double>(scores.size());
}

double style_accuracy(std::span<const Tokens> outputs, std::span<const Sentiment> targets,
                      const Classifier& classifier) {
  std::vector<double> scores;
  scores.reserve(outputs.size());
  for (const auto& o : outputs) scores.push_back(classifier.score(o));
  return style_accuracy(scores, targets);
}

double fluency(std::span<const Tokens> outputs, const LanguageModel& lm) {
  std::vector<double> lp;
  for (const auto& o : outputs) lp.push_back(lm.logprob(o));
  return mean(lp);
}

double aggregate(double acc, double mask_sim, double mask_bleu) {
  return (acc + 100.0 * mask_sim + mask_bleu) / 3.0;
}

EvalReport evaluate(std::string system, const std::vector<Tokens>& hypotheses,
                    const std::vector<Tokens>& sources, const std::vector<Sentiment>& targets,
                    const Scorers& scorers) {
  const std::size_t n = hypotheses.size();
  if (n == 0) throw std::invalid_argument("evaluate: no hypotheses");
  if (sources.size() != n || targets.size() != n) {
    throw std::invalid_argument("evaluate: hypotheses, sources and targets differ in length");
  }
  if (scorers.mask_lexicon == nullptr) throw ConfigError("evaluate: no lexicon for masking");
  if (scorers.embedder == nullptr) throw ConfigError("evaluate: no embedder");
  if (!scorers.classifier_scores && scorers.classifier == nullptr) {
    throw ConfigError("evaluate: no classifier or classifier scores");
  }
  if (!scorers.lm_scores && scorers.lm == nullptr) {
    throw ConfigError("evaluate: no language model or LM scores");
  }
  if (scorers.classifier_scores && scorers.classifier_scores->size() != n) {
    throw DataError("classifier score count does not match the hypotheses");
  }
  if (scorers.lm_scores && scorers.lm_scores->size() != n) {
    throw DataError("LM score count does not match the hypotheses");
  }

  EvalReport r;
  r.system = std::move(system);
  std::vector<double> polarity(n), sim(n), msim(n), b(n), mb(n), lm(n), len(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Tokens& h = hypotheses[i];
    const Tokens& s = sources[i];
    polarity[i] = scorers.classifier_scores ? (*scorers.classifier_scores)[i]
                                            : scorers.classifier->score(h);
    lm[i] = scorers.lm_scores ? (*scorers.lm_scores)[i] : scorers.lm->logprob(h);
    sim[i] = similarity(h, s, *scorers.embedder, &r.warnings);
    msim[i] = mask_sim(h, s, *scorers.embedder, *scorers.mask_lexicon, &r.warnings);
    b[i] = bleu(h, s);
    mb[i] = mask_bleu(h, s, *scorers.mask_lexicon);
    len[i] = static_cast<double>(h.size());

    SentenceScores row;
    row.index = i;
    row.hypothesis = h;
    row.source = s;
    row.target = targets[i];
    row.polarity = polarity[i];
    row.correct = style_accuracy(std::span<const double>(&polarity[i], 1),
                                 std::span<const Sentiment>(&targets[i], 1)) > 0;
    row.sim = sim[i];
    row.mask_sim = msim[i];
    row.bleu = b[i];
    row.mask_bleu = mb[i];
    row.lm = lm[i];
    r.sentences.push_back(std::move(row));
  }
  r.acc = style_accuracy(polarity, targets);
  r.sim = mean(sim);
  r.mask_sim = mean(msim);
  r.bleu = mean(b);
  r.mask_bleu = mean(mb);
  r.lm = mean(lm);
  r.len = mean(len);
  r.avg = aggregate(r.acc, r.mask_sim, r.mask_bleu);
  return r;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: columns differ in length");
  if (x.size() < 2) return std::nullopt;
  const double mx = mean(x), my = mean(y);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> CorrelationMatrix::at(const std::string& a, const std::string& b) const {
  auto ia = std::find(columns.begin(), columns.end(), a);
  auto ib = std::find(columns.begin(), columns.end(), b);
  if (ia == columns.end() || ib == columns.end()) {
    throw std::out_of_range("no correlation column " + (ia == columns.end() ? a : b));
  }
  return values[static_cast<std::size_t>(ia - columns.begin())]
               [static_cast<std::size_t>(ib - columns.begin())];
}

const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{"Acc", "Sim", "M/Sim", "B", "M/B", "LM", "Len", "Avg"};
  return cols;
}

std::vector<double> report_row(const EvalReport& r) {
  return {r.acc, r.sim, r.mask_sim, r.bleu, r.mask_bleu, r.lm, r.len, r.avg};
}

CorrelationMatrix correlation_report(std::span<const EvalReport> reports) {
  if (reports.size() < 3) throw std::invalid_argument("correlation needs at least 3 reports");
  CorrelationMatrix m;
  m.columns = report_columns();
  const std::size_t k = m.columns.size();
  std::vector<std::vector<double>> cols(k);
  for (const auto& r : reports) {
    const auto row = report_row(r);
    for (std::size_t j = 0; j < k; ++j) cols[j].push_back(row[j]);
  }
  m.values.assign(k, std::vector<std::optional<double>>(k));
  for (std::size_t i = 0; i < k; ++i) {
    const bool defined = pearson(cols[i], cols[i]).has_value();
    if (defined) m.values[i][i] = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      m.values[i][j] = pearson(cols[i], cols[j]);
      m.values[j][i] = m.values[i][j];
    }
  }
  return m;
}

std::vector<double> read_scores(const std::filesystem::path& path, std::size_t expected) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open score file " + path.string());
  std::vector<std::optional<double>> slots(expected);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    std::istringstream fields(line);
    std::size_t index;
    double score;
    std::string rest;
    if (!(fields >> index >> score) || (fields >> rest)) {
      throw DataError(where + ": expected index<TAB>score");
    }
    if (index >= expected) throw DataError(where + ": index " + std::to_string(index) + " out of range");
    if (slots[index]) throw DataError(where + ": duplicate index " + std::to_string(index));
    slots[index] = score;
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < expected; ++i) {
    if (!slots[i]) throw DataError(path.string() + ": missing score for index " + std::to_string(i));
    out.push_back(*slots[i]);
  }
  return out;
}

void write_report_tsv(std::ostream& out, std::span<const EvalReport> reports) {
  if (reports.empty()) throw std::invalid_argument("report table needs at least one report");
  out << "Model";
  for (const auto& c : report_columns()) out << '\t' << c;
  out << '\n';
  for (const auto& r : reports) {
    out << r.system << '\t' << fixed(r.acc, 1) << '\t' << fixed(r.sim, 3) << '\t'
        << fixed(r.mask_sim, 3) << '\t' << fixed(r.bleu, 1) << '\t' << fixed(r.mask_bleu, 1)
        << '\t' << fixed(r.lm, 1) << '\t' << fixed(r.len, 1) << '\t' << fixed(r.avg, 1) << '\n';
  }
}

std::vector<EvalReport> read_report_tsv(std::istream& in, std::string_view source_name) {
  std::vector<EvalReport> out;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::istringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    const std::string where = std::string(source_name) + ":" + std::to_string(lineno);
    if (!header) {
      std::vector<std::string> expected{"Model"};
      expected.insert(expected.end(), report_columns().begin(), report_columns().end());
      if (fields != expected) throw DataError(where + ": unexpected report header");
      header = true;
      continue;
    }
    if (fields.size() != 9) throw DataError(where + ": expected 9 columns");
    EvalReport r;
    r.system = fields[0];
    double* slots[] = {&r.acc, &r.sim, &r.mask_sim, &r.bleu, &r.mask_bleu, &r.lm, &r.len, &r.avg};
    for (std::size_t j = 0; j < 8; ++j) {
      try {
        std::size_t used = 0;
        *slots[j] = std::stod(fields[j + 1], &used);
        if (used != fields[j + 1].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw DataError(where + ": bad number '" + fields[j + 1] + "'");
      }
    }
    out.push_back(std::move(r));
  }
  if (!header) throw DataError(std::string(source_name) + ": missing report header");
  return out;
}

std::vector<EvalReport> load_report_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path.string());
  return read_report_tsv(in, path.string());
}

void write_report_json(std::ostream& out, const EvalReport& r) {
  nlohmann::json j;
  j["system"] = r.system;
  j["summary"] = {{"Acc", r.acc}, {"Sim", r.sim},     {"M/Sim", r.mask_sim},
                  {"B", r.bleu},  {"M/B", r.mask_bleu}, {"LM", r.lm},
                  {"Len", r.len}, {"Avg", r.avg}};
  j["warnings"] = r.warnings;
  auto& rows = j["sentences"] = nlohmann::json::array();
  for (const auto& s : r.sentences) {
    rows.push_back({{"index", s.index},
                    {"hypothesis", join(s.hypothesis)},
                    {"source", join(s.source)},
                    {"target", std::string(to_string(s.target))},
                    {"polarity", s.polarity},
                    {"correct", s.correct},
                    {"sim", s.sim},
                    {"mask_sim", s.mask_sim},
                    {"bleu", s.bleu},
                    {"mask_bleu", s.mask_bleu},
                    {"lm", s.lm}});
  }
  out << j.dump(2) << '\n';
}

void write_correlation_tsv(std::ostream& out, const CorrelationMatrix& m) {
  for (const auto& c : m.columns) out << '\t' << c;
  out << '\n';
  for (std::size_t i = 0; i < m.columns.size(); ++i) {
    out << m.columns[i];
    for (std::size_t j = 0; j < m.columns.size(); ++j) {
      out << '\t' << (m.values[i][j] ? fixed(*m.values[i][j], 3) : std::string("NA"));
    }
    out << '\n';
  }
}

}  // namespace padst
