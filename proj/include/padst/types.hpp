#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace padst {

using Tokens = std::vector<std::string>;

enum class Sentiment { pos, neg, unlabeled };

/// pos <-> neg. Throws std::invalid_argument for unlabeled.
Sentiment opposite(Sentiment s);

std::string_view to_string(Sentiment s);

/// Accepts "pos", "neg", "unlabeled"; anything else is a DataError.
Sentiment parse_sentiment(std::string_view text);

/// Space-joined surface form.
std::string join(const Tokens& tokens);

}  // namespace padst
