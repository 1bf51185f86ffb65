#include "padst/translate.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "padst/errors.hpp"

namespace padst {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 128) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

}  // namespace

void BilingualDict::add(std::string_view base, std::string_view intermediate) {
  auto b = lower(base);
  auto i = lower(intermediate);
  if (b.empty() || i.empty()) throw DataError("dictionary entries must be non-empty");
  auto fwd = forward_.find(b);
  if (fwd != forward_.end() && fwd->second != i) {
    throw DataError("dictionary maps '" + b + "' to both '" + fwd->second + "' and '" + i + "'");
  }
  auto bwd = backward_.find(i);
  if (bwd != backward_.end() && bwd->second != b) {
    throw DataError("dictionary maps both '" + bwd->second + "' and '" + b + "' to '" + i + "'");
  }
  forward_[b] = i;
  backward_[i] = b;
}

std::optional<std::string> BilingualDict::forward(std::string_view base) const {
  auto it = forward_.find(lower(base));
  if (it == forward_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> BilingualDict::backward(std::string_view intermediate) const {
  auto it = backward_.find(lower(intermediate));
  if (it == backward_.end()) return std::nullopt;
  return it->second;
}

BilingualDict BilingualDict::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dictionary " + path.string());
  BilingualDict dict;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 'base<TAB>intermediate'");
    }
    try {
      dict.add(line.substr(0, tab), line.substr(tab + 1));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return dict;
}

std::string rotate_token(std::string_view token) {
  std::string out(token);
  for (char& c : out) {
    if (c >= 'a' && c <= 'z') {
      c = static_cast<char>('a' + (c - 'a' + 13) % 26);
    } else if (c >= 'A' && c <= 'Z') {
      c = static_cast<char>('A' + (c - 'A' + 13) % 26);
    } else if (c >= '0' && c <= '9') {
      c = static_cast<char>('0' + (c - '0' + 5) % 10);
    }
  }
  return out;
}

CipherTranslator::CipherTranslator(BilingualDict dict, std::string direction)
    : dict_(std::move(dict)), direction_(std::move(direction)) {}

// Dictionary keys are lowercase, so exact-case lookups below only hit for
// lowercase tokens; anything else takes the rotation path.
std::string CipherTranslator::translate_word(std::string_view word, OovLog* oov) const {
  const bool lowercase = lower(word) == word;
  if (lowercase) {
    if (auto hit = dict_.forward(word)) return *hit;
  }
  if (oov && std::any_of(word.begin(), word.end(),
                         [](unsigned char c) { return std::isalnum(c); })) {
    oov->tokens.emplace(word);
  }
  std::string out = rotate_token(word);
  while (lower(out) == out) {
    auto taken = dict_.backward(out);
    if (!taken) break;
    out = rotate_token(*taken);
  }
  return out;
}

std::string CipherTranslator::invert_word(std::string_view word) const {
  if (lower(word) == word) {
    if (auto hit = dict_.backward(word)) return *hit;
  }
  std::string out = rotate_token(word);
  while (lower(out) == out) {
    auto mapped = dict_.forward(out);
    if (!mapped) break;
    out = rotate_token(*mapped);
  }
  return out;
}

Tokens CipherTranslator::translate(const Tokens& tokens) const { return translate(tokens, nullptr); }

Tokens CipherTranslator::translate(const Tokens& tokens, OovLog* oov) const {
  Tokens out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(translate_word(t, oov));
  return out;
}

Tokens CipherTranslator::invert(const Tokens& tokens) const {
  Tokens out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(invert_word(t));
  return out;
}

}  // namespace padst
