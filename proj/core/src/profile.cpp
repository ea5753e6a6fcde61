#include "orchestra/profile.hpp"

#include <cmath>

#include "orchestra/errors.hpp"

namespace orchestra {

Eigen::VectorXd AgentProfile::as_vector() const {
    Eigen::VectorXd v(kProfileDims);
    v << static_features, perf_features, data_histogram;
    return v;
}

AgentProfile build_profile(const AgentObservables& obs) {
    if (obs.family_index < 0 || obs.family_index >= kStaticDims) {
        throw input_error("build_profile: family index out of range [0,8)");
    }
    if (obs.category_counts.size() != kHistogramDims) {
        throw input_error("build_profile: expected 12 category counts");
    }

    AgentProfile p;
    p.agent_id = obs.agent_id;
    p.round = obs.round;

    p.static_features = Eigen::VectorXd::Zero(kStaticDims);
    p.static_features[obs.family_index] = 1.0;

    p.perf_features = Eigen::VectorXd::Zero(kPerfDims);
    for (int i = 0; i < kPerfMetrics; ++i) {
        double cur = obs.metrics[static_cast<size_t>(i)];
        if (!std::isfinite(cur)) throw input_error("build_profile: non-finite metric");
        p.perf_features[i] = cur;
        // Delta slots stay 0 for a round-0 agent with no history.
        if (obs.previous_metrics) {
            p.perf_features[kPerfMetrics + i] = cur - (*obs.previous_metrics)[static_cast<size_t>(i)];
        }
    }

    p.data_histogram = smoothed_histogram(obs.category_counts);
    return p;
}

Eigen::VectorXd smoothed_histogram(const std::vector<double>& counts) {
    if (counts.size() != kHistogramDims) throw input_error("smoothed_histogram: expected 12 counts");
    Eigen::VectorXd h(kHistogramDims);
    double total = 0.0;
    for (int i = 0; i < kHistogramDims; ++i) {
        double c = counts[static_cast<size_t>(i)];
        if (!(c >= 0.0)) throw input_error("smoothed_histogram: negative category count");
        h[i] = c + kHistogramSmoothing;
        total += h[i];
    }
    h /= total;
    return h;
}

ContextVector build_context(const AgentProfile& sender, const AgentProfile& receiver,
                            const ContextOptions& opts) {
    ContextVector ctx;
    ctx.sender_id = sender.agent_id;
    ctx.receiver_id = receiver.agent_id;
    ctx.values = Eigen::VectorXd(context_dim(opts));
    ctx.values.segment(0, kProfileDims) = sender.as_vector();
    ctx.values.segment(kProfileDims, kProfileDims) = receiver.as_vector();
    if (opts.role_bits) {
        // Protocol id (a single exchange protocol exists, always 1) and a
        // role flag marking whether the lower-id agent of the unordered
        // pair acts as the sender.
        ctx.values[2 * kProfileDims] = 1.0;
        ctx.values[2 * kProfileDims + 1] = sender.agent_id < receiver.agent_id ? 1.0 : 0.0;
    }
    return ctx;
}

namespace {

double js_divergence_impl(const double* p, const double* q, size_t n) {
    double mass_p = 0.0, mass_q = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (!(p[i] >= 0.0) || !(q[i] >= 0.0)) throw input_error("js_divergence: negative mass");
        mass_p += p[i];
        mass_q += q[i];
    }
    if (std::abs(mass_p - 1.0) > 1e-9 || std::abs(mass_q - 1.0) > 1e-9) {
        throw input_error("js_divergence: inputs must sum to 1");
    }

    double kl_p = 0.0, kl_q = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) kl_p += p[i] * std::log2(p[i] / m);
        if (q[i] > 0.0) kl_q += q[i] * std::log2(q[i] / m);
    }
    double js = 0.5 * kl_p + 0.5 * kl_q;
    if (js < 0.0) js = 0.0;
    if (js > 1.0) js = 1.0;
    return js;
}

}  // namespace

double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw input_error("js_divergence: length mismatch");
    return js_divergence_impl(p.data(), q.data(), p.size());
}

double js_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != q.size()) throw input_error("js_divergence: length mismatch");
    return js_divergence_impl(p.data(), q.data(), static_cast<size_t>(p.size()));
}

}  // namespace orchestra
