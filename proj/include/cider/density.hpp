// density.hpp — embedding ingestion and relative density estimation.
//
// The raw ratio for a sample x over a corpus X of size M is
//
//     r(x) = mean of squared Euclidean distances to its K nearest OTHER
//            samples, divided by the mean of squared distances to ALL of X
//            (self included, at distance 0).
//
// Normalized density d(x) is the min-max rescaling of r across the corpus;
// when every ratio is equal, d(x) = 0 for all samples.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cider/common.hpp"

namespace cider {

class IngestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// All corpus points identical: the global mean distance is zero and the
// ratio is undefined.
class DegenerateGeometry : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EmbeddedSample {
    std::string sample_id;
    std::vector<double> vector;
};

struct DensityScores {
    std::vector<double> raw_ratio;  // r(x), corpus order
    std::vector<double> density;    // d(x) in [0,1], corpus order
    int k_used = 0;                 // neighbor count after clamping to M-1
    size_t corpus_size = 0;
};

struct DensityOptions {
    int k = 10;
    unsigned workers = 0;    // 0 = hardware concurrency
    size_t block = 128;      // corpus rows per cache block
};

// Reference single-sample ratio; the engine below must agree with it.
double raw_ratio(const std::vector<EmbeddedSample>& corpus, size_t target_index, int k);

// Min-max normalization; all-equal input maps to all zeros. Equality is
// taken at numerical precision: spreads at rounding scale (<= 1e-9 relative)
// carry no density signal and also map to all zeros.
std::vector<double> normalize_min_max(const std::vector<double>& ratios);

// Exact KNN density pass over the whole corpus: blocked pairwise distances,
// partitioned across workers by target index. Output is deterministic for
// any worker count. K > M-1 is clamped with a warning.
DensityScores compute_densities(const std::vector<EmbeddedSample>& corpus,
                                const DensityOptions& options = {});

// --- vector file formats -------------------------------------------------
//
// Text: header line "dim=<d>", then one line per sample:
//   <sample_id> <v1> <v2> ... <vd>
// Binary: magic "CIDRVEC1", u32 count, u32 dim, count x (u32 len, id bytes),
// then count*dim little-endian float32 values.

std::vector<EmbeddedSample> read_embeddings_text(std::istream& in);
void write_embeddings_text(std::span<const EmbeddedSample> rows, std::ostream& out);
std::vector<EmbeddedSample> read_embeddings_binary(std::istream& in);
void write_embeddings_binary(std::span<const EmbeddedSample> rows, std::ostream& out);

// Resolve `ids` against available vectors, in id order. Every id must map to
// exactly one vector of a uniform dimension; all missing ids are listed in
// the thrown IngestError.
std::vector<EmbeddedSample> ingest_embeddings(const std::vector<EmbeddedSample>& available,
                                              std::span<const std::string> ids);

}  // namespace cider
