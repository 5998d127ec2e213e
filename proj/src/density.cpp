#include "cider/density.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace cider {

namespace {

// Four independent accumulator chains so the compiler can vectorize the
// reduction without reassociation flags. The summation order is fixed by the
// code, not by the worker count, which keeps the pass bit-deterministic.
double squared_distance(const double* a, const double* b, size_t dim) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    size_t j = 0;
    for (; j + 4 <= dim; j += 4) {
        const double d0 = a[j] - b[j];
        const double d1 = a[j + 1] - b[j + 1];
        const double d2 = a[j + 2] - b[j + 2];
        const double d3 = a[j + 3] - b[j + 3];
        s0 += d0 * d0;
        s1 += d1 * d1;
        s2 += d2 * d2;
        s3 += d3 * d3;
    }
    for (; j < dim; ++j) {
        const double d0 = a[j] - b[j];
        s0 += d0 * d0;
    }
    return (s0 + s1) + (s2 + s3);
}

// Keeps the K smallest (value, index) pairs under their total order.
// Ties in value are broken by index, so the selected neighbor set is unique.
struct KSmallest {
    explicit KSmallest(size_t k) : k_(k) { heap_.reserve(k); }

    void offer(double value, size_t index) {
        const std::pair<double, size_t> item{value, index};
        if (heap_.size() < k_) {
            heap_.push_back(item);
            std::push_heap(heap_.begin(), heap_.end());
            return;
        }
        if (item < heap_.front()) {
            std::pop_heap(heap_.begin(), heap_.end());
            heap_.back() = item;
            std::push_heap(heap_.begin(), heap_.end());
        }
    }

    // Mean of the kept values, summed in ascending (value, index) order so
    // the result does not depend on arrival order.
    double mean() {
        std::sort(heap_.begin(), heap_.end());
        double sum = 0.0;
        for (const auto& [v, i] : heap_) sum += v;
        return sum / static_cast<double>(heap_.size());
    }

    void clear() { heap_.clear(); }

private:
    size_t k_;
    std::vector<std::pair<double, size_t>> heap_;
};

size_t checked_dimension(const std::vector<EmbeddedSample>& corpus) {
    const size_t dim = corpus.front().vector.size();
    if (dim == 0) throw IngestError("embedding dimension must be positive");
    for (const auto& row : corpus) {
        if (row.vector.size() != dim) {
            throw IngestError("dimension mismatch for sample " + row.sample_id + ": expected " +
                              std::to_string(dim) + ", got " + std::to_string(row.vector.size()));
        }
        for (double v : row.vector) {
            if (!std::isfinite(v)) {
                throw IngestError("non-finite embedding component in sample " + row.sample_id);
            }
        }
    }
    return dim;
}

}  // namespace

double raw_ratio(const std::vector<EmbeddedSample>& corpus, size_t target_index, int k) {
    const size_t m = corpus.size();
    if (m < 2) throw std::invalid_argument("raw_ratio requires a corpus of at least 2 samples");
    if (target_index >= m) throw std::invalid_argument("raw_ratio target index out of range");
    if (k < 1 || static_cast<size_t>(k) > m - 1) {
        throw std::invalid_argument("raw_ratio requires 1 <= K <= M-1");
    }
    const size_t dim = checked_dimension(corpus);
    const double* target = corpus[target_index].vector.data();

    KSmallest nearest(static_cast<size_t>(k));
    double denom_sum = 0.0;
    for (size_t z = 0; z < m; ++z) {
        double dist = 0.0;
        const double* other = corpus[z].vector.data();
        for (size_t j = 0; j < dim; ++j) {
            const double d = target[j] - other[j];
            dist += d * d;
        }
        denom_sum += dist;
        if (z != target_index) nearest.offer(dist, z);
    }
    if (denom_sum == 0.0) {
        throw DegenerateGeometry("all corpus points are identical; r(x) is undefined");
    }
    return nearest.mean() / (denom_sum / static_cast<double>(m));
}

std::vector<double> normalize_min_max(const std::vector<double>& ratios) {
    if (ratios.empty()) throw std::invalid_argument("normalize_min_max requires a non-empty list");
    const auto [lo_it, hi_it] = std::minmax_element(ratios.begin(), ratios.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<double> out(ratios.size(), 0.0);
    // All-equal ratios mean no density signal and no redundancy penalty.
    // Equality is taken at numerical precision: a spread at rounding scale
    // (e.g. K = M-1 forces r(x) = M/(M-1) identically) must not be stretched
    // across [0,1].
    const double range = hi - lo;
    if (range <= 1e-9 * std::max(1.0, std::fabs(hi))) return out;
    for (size_t i = 0; i < ratios.size(); ++i) out[i] = (ratios[i] - lo) / range;
    return out;
}

DensityScores compute_densities(const std::vector<EmbeddedSample>& corpus,
                                const DensityOptions& options) {
    const size_t m = corpus.size();
    if (m < 2) throw std::invalid_argument("compute_densities requires a corpus of at least 2 samples");
    const size_t dim = checked_dimension(corpus);

    int k = options.k;
    if (k < 1) throw std::invalid_argument("neighbor count K must be >= 1");
    if (static_cast<size_t>(k) > m - 1) {
        log_warn("K=" + std::to_string(k) + " exceeds M-1=" + std::to_string(m - 1) +
                 "; clamping");
        k = static_cast<int>(m - 1);
    }

    // Flatten into one row-major matrix for locality.
    std::vector<double> mat(m * dim);
    for (size_t i = 0; i < m; ++i) {
        std::memcpy(&mat[i * dim], corpus[i].vector.data(), dim * sizeof(double));
    }

    const size_t corpus_block = std::max<size_t>(1, options.block);
    constexpr size_t kTargetTile = 16;

    DensityScores scores;
    scores.raw_ratio.assign(m, 0.0);
    scores.k_used = k;
    scores.corpus_size = m;

    parallel_for(m, options.workers, [&](size_t lo, size_t hi) {
        std::vector<KSmallest> nearest;
        nearest.reserve(kTargetTile);
        for (size_t i = 0; i < kTargetTile; ++i) nearest.emplace_back(static_cast<size_t>(k));
        std::vector<double> denom(kTargetTile);

        for (size_t t0 = lo; t0 < hi; t0 += kTargetTile) {
            const size_t tile = std::min(kTargetTile, hi - t0);
            for (size_t u = 0; u < tile; ++u) {
                nearest[u].clear();
                denom[u] = 0.0;
            }
            // Corpus blocks stream through cache once per tile; per-target
            // denominator accumulation over z stays in plain 0..M-1 order.
            for (size_t z0 = 0; z0 < m; z0 += corpus_block) {
                const size_t z1 = std::min(m, z0 + corpus_block);
                for (size_t u = 0; u < tile; ++u) {
                    const size_t t = t0 + u;
                    const double* target = &mat[t * dim];
                    for (size_t z = z0; z < z1; ++z) {
                        const double dist = squared_distance(target, &mat[z * dim], dim);
                        denom[u] += dist;
                        if (z != t) nearest[u].offer(dist, z);
                    }
                }
            }
            for (size_t u = 0; u < tile; ++u) {
                if (denom[u] == 0.0) {
                    throw DegenerateGeometry("all corpus points are identical; r(x) is undefined");
                }
                scores.raw_ratio[t0 + u] =
                    nearest[u].mean() / (denom[u] / static_cast<double>(m));
            }
        }
    });

    scores.density = normalize_min_max(scores.raw_ratio);
    return scores;
}

// ---------------------------------------------------------------------------
// Vector file formats
// ---------------------------------------------------------------------------

std::vector<EmbeddedSample> read_embeddings_text(std::istream& in) {
    std::string line;
    size_t line_no = 0;
    size_t dim = 0;
    bool have_header = false;
    std::vector<EmbeddedSample> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (!have_header) {
            if (line.rfind("dim=", 0) != 0) {
                throw IngestError("embedding file must start with a dim=<d> header, got: " + line);
            }
            dim = static_cast<size_t>(std::stoul(line.substr(4)));
            if (dim == 0) throw IngestError("embedding dimension must be positive");
            have_header = true;
            continue;
        }
        std::istringstream ls(line);
        EmbeddedSample row;
        if (!(ls >> row.sample_id)) {
            throw IngestError("malformed embedding line " + std::to_string(line_no));
        }
        row.vector.reserve(dim);
        double v;
        while (ls >> v) row.vector.push_back(v);
        if (row.vector.size() != dim) {
            throw IngestError("embedding line " + std::to_string(line_no) + " has " +
                              std::to_string(row.vector.size()) + " components, expected " +
                              std::to_string(dim));
        }
        rows.push_back(std::move(row));
    }
    if (!have_header) throw IngestError("embedding file is empty or missing its dim= header");
    return rows;
}

void write_embeddings_text(std::span<const EmbeddedSample> rows, std::ostream& out) {
    if (rows.empty()) throw std::invalid_argument("cannot write an empty embedding table");
    const size_t dim = rows.front().vector.size();
    out << "dim=" << dim << "\n";
    out.precision(17);
    for (const auto& row : rows) {
        out << row.sample_id;
        for (double v : row.vector) out << ' ' << v;
        out << "\n";
    }
    out.flush();
    if (!out) throw std::runtime_error("embedding sink failed");
}

static constexpr char kBinaryMagic[8] = {'C', 'I', 'D', 'R', 'V', 'E', 'C', '1'};

std::vector<EmbeddedSample> read_embeddings_binary(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kBinaryMagic, 8) != 0) {
        throw IngestError("bad magic in binary embedding file");
    }
    auto read_u32 = [&in]() {
        unsigned char buf[4];
        in.read(reinterpret_cast<char*>(buf), 4);
        if (!in) throw IngestError("truncated binary embedding file");
        return static_cast<uint32_t>(buf[0]) | (static_cast<uint32_t>(buf[1]) << 8) |
               (static_cast<uint32_t>(buf[2]) << 16) | (static_cast<uint32_t>(buf[3]) << 24);
    };
    const uint32_t count = read_u32();
    const uint32_t dim = read_u32();
    if (dim == 0) throw IngestError("embedding dimension must be positive");
    std::vector<EmbeddedSample> rows(count);
    for (auto& row : rows) {
        const uint32_t len = read_u32();
        row.sample_id.resize(len);
        in.read(row.sample_id.data(), len);
        if (!in) throw IngestError("truncated binary embedding file");
    }
    std::vector<float> floats(static_cast<size_t>(count) * dim);
    in.read(reinterpret_cast<char*>(floats.data()),
            static_cast<std::streamsize>(floats.size() * sizeof(float)));
    if (!in) throw IngestError("truncated binary embedding file");
    for (uint32_t i = 0; i < count; ++i) {
        rows[i].vector.assign(floats.begin() + static_cast<size_t>(i) * dim,
                              floats.begin() + static_cast<size_t>(i + 1) * dim);
    }
    return rows;
}

void write_embeddings_binary(std::span<const EmbeddedSample> rows, std::ostream& out) {
    if (rows.empty()) throw std::invalid_argument("cannot write an empty embedding table");
    const uint32_t dim = static_cast<uint32_t>(rows.front().vector.size());
    out.write(kBinaryMagic, 8);
    auto write_u32 = [&out](uint32_t v) {
        unsigned char buf[4] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>((v >> 8) & 0xff),
                                static_cast<unsigned char>((v >> 16) & 0xff),
                                static_cast<unsigned char>((v >> 24) & 0xff)};
        out.write(reinterpret_cast<char*>(buf), 4);
    };
    write_u32(static_cast<uint32_t>(rows.size()));
    write_u32(dim);
    for (const auto& row : rows) {
        write_u32(static_cast<uint32_t>(row.sample_id.size()));
        out.write(row.sample_id.data(), static_cast<std::streamsize>(row.sample_id.size()));
    }
    std::vector<float> floats;
    floats.reserve(rows.size() * dim);
    for (const auto& row : rows) {
        for (double v : row.vector) floats.push_back(static_cast<float>(v));
    }
    out.write(reinterpret_cast<char*>(floats.data()),
              static_cast<std::streamsize>(floats.size() * sizeof(float)));
    out.flush();
    if (!out) throw std::runtime_error("embedding sink failed");
}

std::vector<EmbeddedSample> ingest_embeddings(const std::vector<EmbeddedSample>& available,
                                              std::span<const std::string> ids) {
    std::unordered_map<std::string, const EmbeddedSample*> by_id;
    by_id.reserve(available.size());
    for (const auto& row : available) {
        if (!by_id.emplace(row.sample_id, &row).second) {
            throw IngestError("duplicate embedding for sample id " + row.sample_id);
        }
    }
    std::vector<std::string> missing;
    std::vector<EmbeddedSample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            missing.push_back(id);
        } else if (missing.empty()) {
            out.push_back(*it->second);
        }
    }
    if (!missing.empty()) {
        std::string msg = "missing embeddings for " + std::to_string(missing.size()) + " sample id(s):";
        for (const auto& id : missing) msg += " " + id;
        throw IngestError(msg);
    }
    if (!out.empty()) checked_dimension(out);
    return out;
}

}  // namespace cider
