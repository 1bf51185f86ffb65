#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "padst/types.hpp"

namespace padst {

/// Word-sequence translator from a base language into an intermediate one.
class Translator {
 public:
  virtual ~Translator() = default;
  virtual Tokens translate(const Tokens& tokens) const = 0;
  virtual std::string name() const = 0;
  virtual std::string direction() const = 0;
};

// Case-insensitive bijection between base and intermediate words.
class BilingualDict {
 public:
  /// Throws DataError if either side is already mapped to something else.
  void add(std::string_view base, std::string_view intermediate);

  std::optional<std::string> forward(std::string_view base) const;
  std::optional<std::string> backward(std::string_view intermediate) const;
  std::size_t size() const { return forward_.size(); }

  /// TSV lines "base<TAB>intermediate"; '#' starts a comment line.
  static BilingualDict load(const std::filesystem::path& path);

 private:
  std::map<std::string, std::string, std::less<>> forward_;
  std::map<std::string, std::string, std::less<>> backward_;
};

/// ROT13 on ASCII letters and ROT5 on digits; every other byte is kept.
/// The rotation is its own inverse.
std::string rotate_token(std::string_view token);

struct OovLog {
  std::set<std::string> tokens;
};

// Deterministic dictionary cipher standing in for a machine translation
// system. Dictionary words map through the dictionary; every other token is
// character-rotated. When a rotated word would land on a dictionary output,
// the rotation walks the chain rot(w) -> dict^-1 -> rot(..) until it reaches a
// free string, which keeps the whole map a bijection on token strings.
class CipherTranslator : public Translator {
 public:
  explicit CipherTranslator(BilingualDict dict = {}, std::string direction = "en-de");

  Tokens translate(const Tokens& tokens) const override;
  Tokens translate(const Tokens& tokens, OovLog* oov) const;
  Tokens invert(const Tokens& tokens) const;

  std::string translate_word(std::string_view word, OovLog* oov = nullptr) const;
  std::string invert_word(std::string_view word) const;

  std::string name() const override { return "cipher"; }
  std::string direction() const override { return direction_; }
  const BilingualDict& dict() const { return dict_; }

 private:
  BilingualDict dict_;
  std::string direction_;
};

}  // namespace padst
