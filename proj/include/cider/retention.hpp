// retention.hpp — causal saliency, the retention function, stochastic
// thinning, and the analytic property checks behind the selection report.
//
// With b(d) = 1/(1 + alpha*d), the retention probability is
//
//     g(f, d) = b(d) + lambda * f * (1 - b(d))
//             = (1 + alpha*lambda*f*d) / (1 + alpha*d),
//
// monotonically increasing in saliency f, decreasing in density d, with
// 1/(1+alpha*d) <= g <= 1 and lambda*f <= g.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cider/common.hpp"

namespace cider {

struct RetentionConfig {
    double alpha = 1.0;   // density sensitivity, > 0
    double lambda = 0.5;  // causal weight, in [0,1]
    double gamma = 8.0;   // causal scaling, > 0
    int k = 10;           // neighbor count, >= 1
    uint64_t seed = 0;    // drives the per-sample xi draws

    void validate() const;
};

// f(x) = tanh(keyword_count / gamma), in [0,1) for finite counts.
double causal_saliency(long long keyword_count, double gamma);

// g(f, d) evaluated in the two-term form above. The lambda*f == 1 boundary
// returns exactly 1, its algebraic value; elsewhere the two-term form is
// evaluated directly and stays within [1/(1+alpha*d), 1] in floating point.
double retention_probability(double f, double d, double alpha, double lambda);
double retention_probability(double f, double d, const RetentionConfig& config);

// Independent algebraic route: (1 + alpha*lambda*f*d) / (1 + alpha*d).
// Must agree with retention_probability to <= 1e-12 everywhere.
double retention_probability_closed_form(double f, double d, double alpha, double lambda);

// Counter-based xi in [0,1), keyed by (seed, sample_id). Stateless, so
// selection is order- and worker-count-independent.
double xi_for(uint64_t seed, std::string_view sample_id);

struct ScoredSample {
    std::string sample_id;
    long long keyword_count = 0;  // K(x)
    double saliency = 0.0;        // f(x)
    double raw_ratio = 0.0;       // r(x)
    double density = 0.0;         // d(x)
    double retention_prob = 0.0;  // g(x)
    double xi = 0.0;              // realized xi_x
    bool retained = false;        // xi <= g
};

// Fills retention_prob, xi, and retained for each entry (saliency and
// density must already be set). Output order equals input order.
std::vector<ScoredSample> select(std::vector<ScoredSample> scored, const RetentionConfig& config);

struct ExpectedSize {
    double expectation = 0.0;  // sum of g(x)
    double stddev = 0.0;       // sqrt(sum of g(x)(1-g(x)))
};

ExpectedSize expected_retained_size(std::span<const ScoredSample> scored);

struct PreservationResult {
    double ratio = 1.0;        // I_f(retained) / I_f(corpus)
    double lower_bound = 0.0;  // lambda * mean saliency
    bool degenerate = false;   // corpus causal mass was zero; ratio reported as 1
};

PreservationResult causal_preservation(std::span<const ScoredSample> scored, double lambda);

// Lipschitz bound on |g(f~, d~) - g(f, d)| for |f~-f| <= eps_f, |d~-d| <= eps_d:
// alpha*eps_d + lambda*(alpha/(1+alpha))*eps_f.
double perturbation_bound(const RetentionConfig& config, double eps_f, double eps_d);

enum class CheckStatus {
    Pass,           // holds, strictly where the parameters demand it
    PassNonStrict,  // holds non-strictly; boundary parameters (e.g. lambda=0)
    Violated,
};

std::string to_string(CheckStatus status);

struct PropertyCheck {
    std::string name;
    CheckStatus status = CheckStatus::Pass;
    double max_error = 0.0;  // worst |finite difference - analytic| or bound breach
    double worst_f = 0.0;
    double worst_d = 0.0;
    std::string note;
};

struct PropertyCheckSummary {
    std::vector<PropertyCheck> checks;
    bool all_passed() const;
};

// Evaluates, over a 101x101 grid on [0,1]^2 plus 10^4 fixed random points:
// closed-form equivalence (<=1e-12), the four retention-function theorems
// with analytic derivatives matched by central differences (<=1e-6 at step
// 1e-5), and the range/boundary bounds (exact).
PropertyCheckSummary verify_properties(const RetentionConfig& config);

// Run-level summary emitted next to the retained corpus. The preservation
// lower bound is lambda * mean saliency.
struct SelectionReport {
    RetentionConfig config;
    int k_used = 0;
    size_t corpus_size = 0;
    double expected_retained_size = 0.0;  // sum of g
    double retained_stddev = 0.0;         // sqrt(sum of g(1-g))
    size_t realized_retained_size = 0;
    double mean_saliency = 0.0;
    double causal_mass_corpus = 0.0;    // I_f over all samples
    double causal_mass_retained = 0.0;  // I_f over the retained subset
    double preservation_ratio = 1.0;
    bool preservation_degenerate = false;
    double preservation_lower_bound = 0.0;
    PropertyCheckSummary property_checks;
    std::string encoder_identity;
    std::string corpus_hash;
    std::string timestamp;
};

SelectionReport build_selection_report(std::span<const ScoredSample> scored,
                                       const RetentionConfig& config, int k_used);

}  // namespace cider
