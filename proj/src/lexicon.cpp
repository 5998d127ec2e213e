#include "cider/lexicon.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace cider {

namespace {

bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c >= 0x80;
}

}  // namespace

std::vector<std::string> word_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    const size_t n = text.size();
    size_t i = 0;
    while (i < n) {
        if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        size_t j = i;
        while (j < n) {
            if (is_word_byte(static_cast<unsigned char>(text[j]))) {
                ++j;
            } else if (text[j] == '-' && j + 1 < n &&
                       is_word_byte(static_cast<unsigned char>(text[j + 1]))) {
                ++j;  // internal hyphen stays inside the token
            } else {
                break;
            }
        }
        tokens.push_back(lower_ascii(text.substr(i, j - i)));
        i = j;
    }
    return tokens;
}

CausalLexicon CausalLexicon::from_phrases(const std::vector<std::string>& phrases) {
    CausalLexicon lex;
    for (const auto& raw : phrases) {
        std::string phrase = trim(lower_ascii(raw));
        if (phrase.empty()) continue;
        auto toks = word_tokens(phrase);
        if (toks.empty() || toks.size() > 4) {
            throw ConfigError("lexicon phrases must have 1-4 words: \"" + raw + "\"");
        }
        std::string normalized;
        for (size_t i = 0; i < toks.size(); ++i) {
            if (i) normalized += ' ';
            normalized += toks[i];
        }
        if (std::find(lex.phrases_.begin(), lex.phrases_.end(), normalized) == lex.phrases_.end()) {
            lex.phrases_.push_back(normalized);
        }
    }
    lex.compile();
    return lex;
}

CausalLexicon CausalLexicon::load(std::istream& in) {
    std::vector<std::string> phrases;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (!line.empty()) phrases.push_back(line);
    }
    return from_phrases(phrases);
}

CausalLexicon CausalLexicon::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open lexicon file: " + path);
    return load(in);
}

void CausalLexicon::compile() {
    index_.clear();
    for (const auto& phrase : phrases_) {
        auto toks = word_tokens(phrase);
        index_[toks.front()].push_back(std::move(toks));
    }
    for (auto& [first, candidates] : index_) {
        std::sort(candidates.begin(), candidates.end(),
                  [](const auto& a, const auto& b) { return a.size() > b.size(); });
    }
}

size_t CausalLexicon::count_matches(std::string_view text) const {
    const auto tokens = word_tokens(text);
    size_t count = 0;
    size_t i = 0;
    while (i < tokens.size()) {
        auto it = index_.find(tokens[i]);
        if (it == index_.end()) {
            ++i;
            continue;
        }
        bool matched = false;
        for (const auto& cand : it->second) {  // longest first
            if (i + cand.size() > tokens.size()) continue;
            bool ok = true;
            for (size_t k = 1; k < cand.size(); ++k) {
                if (tokens[i + k] != cand[k]) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                ++count;
                i += cand.size();
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
    }
    return count;
}

size_t count_causal_tokens(const Rationale& r, const CausalLexicon& lexicon) {
    if (lexicon.empty()) throw ConfigError("causal lexicon is empty");
    std::string joined;
    joined.reserve(r.pre_state.size() + r.post_state.size() + r.trigger.size() +
                   r.mechanism.size() + r.chain_of_thought.size() + 8);
    joined += r.pre_state;
    joined += '\n';
    joined += r.post_state;
    joined += '\n';
    joined += r.trigger;
    joined += '\n';
    joined += r.mechanism;
    joined += '\n';
    joined += r.chain_of_thought;
    return lexicon.count_matches(joined);
}

size_t count_causal_tokens(const SynthesizedSample& sample, const CausalLexicon& lexicon) {
    return count_causal_tokens(sample.rationale, lexicon);
}

}  // namespace cider
