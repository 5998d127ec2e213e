#include "cider/serializer.hpp"

#include <fstream>
#include <sstream>

namespace cider {

std::string pack_sample(const SynthesizedSample& sample) {
    sample.validate();
    std::ostringstream os;
    os << "TASK:\n" << sample.task << "\n\n";
    os << "PLAN:\n";
    for (size_t i = 0; i < sample.plan.subgoals.size(); ++i) {
        os << (i + 1) << ". " << sample.plan.subgoals[i] << "\n";
    }
    os << "\n";
    os << "ACTION:\n" << sample.grounded_action << "\n\n";
    os << "PRE-STATE:\n" << sample.rationale.pre_state << "\n\n";
    os << "POST-STATE:\n" << sample.rationale.post_state << "\n\n";
    os << "TRIGGER:\n" << sample.rationale.trigger << "\n\n";
    os << "MECHANISM:\n" << sample.rationale.mechanism << "\n\n";
    os << "REASONING:\n" << sample.rationale.chain_of_thought << "\n";
    return os.str();
}

namespace {

bool is_escaped_delimiter_line(std::string_view line, const std::string& delimiter) {
    size_t slashes = 0;
    while (slashes < line.size() && line[slashes] == '\\') ++slashes;
    return line.substr(slashes) == delimiter;
}

template <typename PerLine>
std::string transform_lines(const std::string& text, PerLine&& per_line) {
    std::string out;
    out.reserve(text.size() + 8);
    size_t start = 0;
    while (start <= text.size()) {
        const size_t nl = text.find('\n', start);
        const std::string_view line =
            nl == std::string::npos ? std::string_view(text).substr(start)
                                    : std::string_view(text).substr(start, nl - start);
        per_line(line, out);
        if (nl == std::string::npos) break;
        out += '\n';
        start = nl + 1;
    }
    return out;
}

}  // namespace

std::string escape_delimiter_lines(const std::string& document, const std::string& delimiter) {
    return transform_lines(document, [&](std::string_view line, std::string& out) {
        if (is_escaped_delimiter_line(line, delimiter)) out += '\\';
        out += line;
    });
}

std::string unescape_delimiter_lines(const std::string& document, const std::string& delimiter) {
    return transform_lines(document, [&](std::string_view line, std::string& out) {
        if (!line.empty() && line[0] == '\\' && is_escaped_delimiter_line(line.substr(1), delimiter)) {
            out += line.substr(1);
        } else {
            out += line;
        }
    });
}

size_t count_ws_tokens(std::string_view text) {
    size_t count = 0;
    bool in_token = false;
    for (char c : text) {
        const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
        if (!ws && !in_token) ++count;
        in_token = !ws;
    }
    return count;
}

namespace {

class ShardWriter {
public:
    ShardWriter(const std::filesystem::path& base, size_t shard_bytes)
        : base_(base), shard_bytes_(shard_bytes) {}

    void write_document(const std::string& text) {
        if (!out_.is_open()) open_next();
        out_ << text;
        written_ += text.size();
        if (!out_) throw std::runtime_error("packed-corpus sink failed: " + current_.string());
        if (shard_bytes_ > 0 && written_ >= shard_bytes_) close_current();
    }

    std::vector<std::filesystem::path> finish() {
        if (out_.is_open()) close_current();
        return shards_;
    }

private:
    void open_next() {
        current_ = base_;
        if (shard_bytes_ > 0) {
            char suffix[8];
            std::snprintf(suffix, sizeof suffix, ".%03zu", shards_.size());
            current_ += suffix;
        }
        out_.open(current_, std::ios::binary | std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot open packed-corpus file: " + current_.string());
        shards_.push_back(current_);
        written_ = 0;
    }

    void close_current() {
        out_.flush();
        if (!out_) throw std::runtime_error("packed-corpus sink failed: " + current_.string());
        out_.close();
    }

    std::filesystem::path base_;
    std::filesystem::path current_;
    size_t shard_bytes_;
    size_t written_ = 0;
    std::ofstream out_;
    std::vector<std::filesystem::path> shards_;
};

}  // namespace

PackedCorpus pack_corpus(std::span<const SynthesizedSample> samples,
                         const std::filesystem::path& corpus_path,
                         const std::filesystem::path& manifest_path, const PackOptions& options) {
    if (samples.empty()) throw std::invalid_argument("nothing to pack: retained corpus is empty");
    if (options.delimiter.empty() || options.delimiter.find('\n') != std::string::npos) {
        throw ConfigError("document delimiter must be a non-empty single line");
    }

    PackedCorpus packed;
    ShardWriter writer(corpus_path, options.shard_bytes);
    for (const auto& sample : samples) {
        const std::string doc = escape_delimiter_lines(pack_sample(sample), options.delimiter);
        packed.stats.doc_chars.push_back(doc.size());
        packed.stats.doc_ws_tokens.push_back(count_ws_tokens(doc));
        packed.stats.total_chars += doc.size();
        packed.stats.total_ws_tokens += packed.stats.doc_ws_tokens.back();
        ++packed.stats.documents;
        packed.manifest.push_back(sample.id);
        writer.write_document(doc + options.delimiter + "\n");
    }
    packed.shards = writer.finish();

    if (!manifest_path.empty()) {
        std::ofstream mf(manifest_path, std::ios::binary | std::ios::trunc);
        if (!mf) throw std::runtime_error("cannot open manifest file: " + manifest_path.string());
        for (const auto& id : packed.manifest) mf << id << "\n";
        mf.flush();
        if (!mf) throw std::runtime_error("manifest sink failed: " + manifest_path.string());
    }
    return packed;
}

}  // namespace cider
