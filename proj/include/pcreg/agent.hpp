#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pcreg/actions.hpp"
#include "pcreg/cloud.hpp"
#include "pcreg/rng.hpp"

namespace pcreg {

enum class PolicyKind { greedy, stoch1, stoch2, uniform_random };

PolicyKind policy_kind_from_string(const std::string& s);
const char* to_string(PolicyKind k);

struct PolicySpec {
    PolicyKind kind = PolicyKind::greedy;
    // Selection weights for the best, second and third masked action under
    // stoch1; renormalized, since as printed they sum to 1.05.
    std::array<double, 3> stoch1_probs{0.85, 0.15, 0.05};
    std::uint64_t seed = 0;
};

struct SchedulePhase {
    std::size_t iterations = 0;
    SizeClass allowed = SizeClass::large_step;
};

/// Ordered size-class phases of the registration loop.
struct Schedule {
    std::vector<SchedulePhase> phases;

    /// 20 iterations restricted to large actions, then 40 to small ones.
    static Schedule standard();

    std::size_t total_iterations() const;
};

/// Scores every action of its action set at the current state. The oracles
/// read the pair's ground truth; a learned source reads only the observed
/// clouds. One interface so the loop cannot tell the difference.
class RewardSource {
public:
    virtual ~RewardSource() = default;

    virtual const std::vector<ActionSpec>& actions() const { return default_action_set(); }
    virtual std::vector<double> rewards(const CloudPair& pair,
                                        const AccumulatedTransform& acc) = 0;
    virtual const char* name() const = 0;
};

/// Exact reward from the SE(3) residual.
class Se3OracleSource final : public RewardSource {
public:
    std::vector<double> rewards(const CloudPair& pair,
                                const AccumulatedTransform& acc) override;
    const char* name() const override { return "oracle_se3"; }
};

/// Exact reward from cloud distances (ablation).
class PointOracleSource final : public RewardSource {
public:
    explicit PointOracleSource(PointRewardKind kind) : kind_(kind) {}
    std::vector<double> rewards(const CloudPair& pair,
                                const AccumulatedTransform& acc) override;
    const char* name() const override;

private:
    PointRewardKind kind_;
};

/// One action choice. greedy: masked argmax, ties to the lowest index.
/// stoch1: top three masked actions by reward, drawn with the renormalized
/// probabilities. stoch2: uniform over masked actions with positive reward,
/// masked argmax when none is positive. uniform_random: ignores rewards.
std::size_t select_action(const PolicySpec& policy, const std::vector<double>& rewards,
                          const std::vector<std::size_t>& mask, Rng& rng);

struct TraceRecord {
    std::size_t iteration = 0;
    std::size_t action_index = 0;
    std::vector<double> rewards;
    AccumulatedTransform acc; // state after the chosen action
    double rot_err_deg = 0.0;
    double trans_err = 0.0;
    double chamfer = 0.0; // NaN when chamfer tracing is off
};

struct RegistrationTrace {
    std::vector<TraceRecord> records;
};

struct RegistrationResult {
    AccumulatedTransform estimate;
    RegistrationTrace trace;
};

/// The fixed-budget registration loop: start at the identity accumulator,
/// query rewards, mask to the phase's size class, select, apply. No early
/// stopping. trace_chamfer = false skips the per-iteration chamfer (the
/// field reads NaN), which matters for large oracle sweeps.
RegistrationResult run_registration(RewardSource& source, const CloudPair& pair,
                                    const Schedule& schedule, const PolicySpec& policy,
                                    bool trace_chamfer = true);

/// Observed source moved by the estimate: rotation first, then the offset.
PointCloud estimate_to_cloud(const CloudPair& pair, const AccumulatedTransform& estimate);

/// iter,action_index,action_name,rot_err_deg,trans_err,chamfer per record.
std::string trace_to_csv(const RegistrationTrace& trace,
                         const std::vector<ActionSpec>& actions);

} // namespace pcreg
