#include "pcreg/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pcreg/errors.hpp"
#include "pcreg/metrics.hpp"

namespace pcreg {

PolicyKind policy_kind_from_string(const std::string& s) {
    if (s == "greedy") return PolicyKind::greedy;
    if (s == "stoch1") return PolicyKind::stoch1;
    if (s == "stoch2") return PolicyKind::stoch2;
    if (s == "random") return PolicyKind::uniform_random;
    throw ValidationError("unknown policy kind: " + s);
}

const char* to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::greedy: return "greedy";
        case PolicyKind::stoch1: return "stoch1";
        case PolicyKind::stoch2: return "stoch2";
        case PolicyKind::uniform_random: return "random";
    }
    return "greedy";
}

Schedule Schedule::standard() {
    return {{{20, SizeClass::large_step}, {40, SizeClass::small_step}}};
}

std::size_t Schedule::total_iterations() const {
    std::size_t total = 0;
    for (const SchedulePhase& p : phases) total += p.iterations;
    return total;
}

std::vector<double> Se3OracleSource::rewards(const CloudPair& pair,
                                             const AccumulatedTransform& acc) {
    return reward_vector_se3(actions(), residual(pair.gt, acc));
}

std::vector<double> PointOracleSource::rewards(const CloudPair& pair,
                                               const AccumulatedTransform& acc) {
    return reward_vector_points(actions(), pair, acc, kind_);
}

const char* PointOracleSource::name() const {
    return kind_ == PointRewardKind::l2_clean ? "oracle_l2_clean" : "oracle_mcd";
}

namespace {

std::size_t masked_argmax(const std::vector<double>& rewards,
                          const std::vector<std::size_t>& mask) {
    std::size_t best = mask[0];
    for (std::size_t idx : mask)
        if (rewards[idx] > rewards[best] || (rewards[idx] == rewards[best] && idx < best))
            best = idx;
    return best;
}

} // namespace

std::size_t select_action(const PolicySpec& policy, const std::vector<double>& rewards,
                          const std::vector<std::size_t>& mask, Rng& rng) {
    if (mask.empty()) throw ValidationError("select_action: empty action mask");
    for (std::size_t idx : mask)
        if (idx >= rewards.size()) throw ValidationError("select_action: mask out of range");

    switch (policy.kind) {
        case PolicyKind::greedy:
            return masked_argmax(rewards, mask);

        case PolicyKind::stoch1: {
            for (double p : policy.stoch1_probs)
                if (!(p > 0.0)) throw ValidationError("select_action: stoch1 probs must be positive");
            std::vector<std::size_t> order(mask);
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (rewards[a] != rewards[b]) return rewards[a] > rewards[b];
                return a < b;
            });
            const std::size_t k = std::min<std::size_t>(3, order.size());
            double total = 0.0;
            for (std::size_t i = 0; i < k; ++i) total += policy.stoch1_probs[i];
            const double u = rng.uniform01() * total;
            double cum = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                cum += policy.stoch1_probs[i];
                if (u < cum) return order[i];
            }
            return order[k - 1];
        }

        case PolicyKind::stoch2: {
            std::vector<std::size_t> positive;
            for (std::size_t idx : mask)
                if (rewards[idx] > 0.0) positive.push_back(idx);
            if (positive.empty()) return masked_argmax(rewards, mask);
            return positive[rng.below(positive.size())];
        }

        case PolicyKind::uniform_random:
            return mask[rng.below(mask.size())];
    }
    throw ValidationError("select_action: unknown policy kind");
}

RegistrationResult run_registration(RewardSource& source, const CloudPair& pair,
                                    const Schedule& schedule, const PolicySpec& policy,
                                    bool trace_chamfer) {
    if (schedule.total_iterations() == 0)
        throw ValidationError("run_registration: schedule has no iterations");
    const std::vector<ActionSpec>& actions = source.actions();

    // Per-size-class index masks, built once.
    std::vector<std::size_t> mask_small, mask_large;
    for (std::size_t i = 0; i < actions.size(); ++i)
        (actions[i].size_class == SizeClass::small_step ? mask_small : mask_large).push_back(i);

    Rng rng(policy.seed);
    RegistrationResult result;
    result.trace.records.reserve(schedule.total_iterations());
    AccumulatedTransform acc;

    std::size_t iteration = 0;
    for (const SchedulePhase& phase : schedule.phases) {
        const std::vector<std::size_t>& mask =
            phase.allowed == SizeClass::small_step ? mask_small : mask_large;
        for (std::size_t step = 0; step < phase.iterations; ++step, ++iteration) {
            std::vector<double> rewards;
            try {
                rewards = source.rewards(pair, acc);
            } catch (const std::exception& e) {
                throw DataError("run_registration: iteration " + std::to_string(iteration) +
                                ": " + e.what());
            }
            if (rewards.size() != actions.size())
                throw ValidationError("run_registration: reward vector size mismatch");

            const std::size_t chosen = select_action(policy, rewards, mask, rng);
            acc = apply_action(acc, actions[chosen]);

            TraceRecord record;
            record.iteration = iteration;
            record.action_index = chosen;
            record.rewards = std::move(rewards);
            record.acc = acc;
            record.rot_err_deg = rot_error_iso(acc.rotation_acc, pair.gt.rotation);
            record.trans_err = trans_error(acc.translation_acc, pair.gt.translation);
            record.chamfer = trace_chamfer
                                 ? modified_chamfer(pair, to_rigid_transform(acc),
                                                    /*plain=*/pair.clean_source.points.empty())
                                 : std::numeric_limits<double>::quiet_NaN();
            result.trace.records.push_back(std::move(record));
        }
    }

    result.estimate = acc;
    return result;
}

PointCloud estimate_to_cloud(const CloudPair& pair, const AccumulatedTransform& estimate) {
    return apply_transform(pair.source, to_rigid_transform(estimate));
}

std::string trace_to_csv(const RegistrationTrace& trace,
                         const std::vector<ActionSpec>& actions) {
    std::ostringstream out;
    out.precision(17);
    out << "iter,action_index,action_name,rot_err_deg,trans_err,chamfer\n";
    for (const TraceRecord& r : trace.records) {
        if (r.action_index >= actions.size())
            throw ValidationError("trace_to_csv: action index outside the action set");
        out << r.iteration << ',' << r.action_index << ',' << action_name(actions[r.action_index])
            << ',' << r.rot_err_deg << ',' << r.trans_err << ',' << r.chamfer << '\n';
    }
    return out.str();
}

} // namespace pcreg
