// lexicon.hpp — causal-logic keyword counting over a sample's rationale.
//
// Matching rules: case-insensitive, word-boundary respecting, longest phrase
// first, non-overlapping. Tokens are maximal runs of word characters (ASCII
// alphanumerics, '_', and any non-ASCII byte); single hyphens between word
// characters join their neighbors into one token, so "double-check" is one
// token and does not contain "check".
#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cider/corpus_model.hpp"

namespace cider {

class CausalLexicon {
public:
    // Built from the shipped keyword file (see data/causal_keywords.txt).
    static const CausalLexicon& default_lexicon();

    // One phrase per line, lowercase, 1-4 words; '#' comments and blank lines
    // are ignored. Duplicate phrases are collapsed.
    static CausalLexicon load(std::istream& in);
    static CausalLexicon load_file(const std::string& path);
    static CausalLexicon from_phrases(const std::vector<std::string>& phrases);

    bool empty() const { return phrases_.size() == 0; }
    size_t size() const { return phrases_.size(); }
    const std::vector<std::string>& phrases() const { return phrases_; }

    // Matches in `text` under the rules above.
    size_t count_matches(std::string_view text) const;

private:
    std::vector<std::string> phrases_;  // normalized, unique
    // first token -> candidate token sequences, longest first
    std::unordered_map<std::string, std::vector<std::vector<std::string>>> index_;

    void compile();
};

// Splits text into lowercase word tokens under the lexicon token rules.
std::vector<std::string> word_tokens(std::string_view text);

// K(x): total matches over the concatenation of the five rationale fields.
size_t count_causal_tokens(const SynthesizedSample& sample, const CausalLexicon& lexicon);
size_t count_causal_tokens(const Rationale& rationale, const CausalLexicon& lexicon);

}  // namespace cider
