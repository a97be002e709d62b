#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pcreg/agent.hpp"
#include "pcreg/cloud.hpp"
#include "pcreg/cloud_io.hpp"
#include "pcreg/metrics.hpp"
#include "pcreg/rewardnet.hpp"
#include "pcreg/rotsample.hpp"
#include "pcreg/train.hpp"

namespace pcreg {

/// Evaluation protocols. Each fixes the perturbation pipeline; the partial
/// protocol is pinned to a 0.70 retained fraction and 717 observed points.
enum class Protocol { clean, noisy, partial };

Protocol protocol_from_string(const std::string& s);
const char* to_string(Protocol p);

/// The perturbation settings a protocol pins down. clean: 1024 shared
/// subsampled points, no noise. noisy: 1024 points resampled independently
/// per side plus clipped Gaussian noise. partial: noisy plus a plane crop.
PerturbationConfig protocol_perturbation(Protocol p);

/// Where the agent's per-action rewards come from.
enum class RewardSourceKind { oracle_se3, oracle_l2, oracle_mcd, network };

RewardSourceKind reward_source_kind_from_string(const std::string& s);
const char* to_string(RewardSourceKind k);

/// A reward source plus whatever storage keeps it valid (loaded network
/// weights). Use .source for the agent loop.
struct BoundRewardSource {
    std::unique_ptr<NetworkParameters> params; // null for oracle kinds
    std::unique_ptr<RewardSource> source;
};

BoundRewardSource make_reward_source(RewardSourceKind kind, const std::string& weights_path);

/// Test clouds: either synthesized shapes cycled per pair, or entries of a
/// manifest split. manifest non-empty selects manifest mode.
struct DatasetSpec {
    std::vector<ShapeKind> shapes{ShapeKind::sphere, ShapeKind::box, ShapeKind::helix,
                                  ShapeKind::torus};
    std::size_t shape_points = 2048; // synthesized or mesh-sampled cloud size
    std::string manifest;
    std::string split = "test"; // train | val | test

    void validate() const;
};

/// Training settings consumed by the ablations that fit a network per arm
/// (sampling, curriculum). Deliberately tiny so an ablation sweep stays in
/// the seconds-to-minutes range.
struct AblationTrainSpec {
    std::vector<ShapeKind> shapes{ShapeKind::box, ShapeKind::helix, ShapeKind::torus};
    NetConfig net;
    TrainConfig train;

    AblationTrainSpec();
};

/// One experiment, fully resolved: what data, what perturbations, what agent,
/// and where the table goes. Serializes to and from JSON so runs are
/// reproducible from the emitted header comments alone.
struct ExperimentConfig {
    Protocol protocol = Protocol::clean;
    TransformSampleConfig transform;  // seed is overridden per pair
    PerturbationConfig perturbation;  // protocol defaults; n_points overridable
    PolicySpec policy;
    Schedule schedule = Schedule::standard();
    RewardSourceKind reward = RewardSourceKind::oracle_se3;
    std::string weights; // network weights path when reward == network
    bool refine_icp = false;
    DatasetSpec dataset;
    AblationTrainSpec ablation_train;
    std::size_t n_pairs = 100;
    std::string output;
    std::uint64_t seed = 0;

    ExperimentConfig();

    /// Rejects inconsistent settings, notably any attempt to run the partial
    /// protocol with a crop fraction other than 0.70 or a point count other
    /// than 717.
    void validate() const;
};

std::string experiment_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const std::string& text);

/// Category-ordered manifest split: categories in first-appearance order,
/// first half of them feed train/val, second half is the held-out test set.
/// Within the train categories every k-th entry goes to val (k from
/// val_fraction). Train and test categories never overlap.
struct ManifestSplit {
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> val;
    std::vector<ManifestEntry> test;
};

ManifestSplit split_manifest(const std::vector<ManifestEntry>& entries,
                             double val_fraction = 0.1);

/// Test clouds resolved from a dataset spec. Synthetic mode synthesizes each
/// listed shape once; manifest mode loads every entry of the chosen split.
std::vector<PointCloud> load_dataset(const DatasetSpec& spec, std::uint64_t seed);

/// A training run from nothing but JSON: synthesized shapes, network shape,
/// optimizer settings. The CLI's train subcommand consumes this.
struct TrainingRunSpec {
    std::vector<ShapeKind> shapes{ShapeKind::box, ShapeKind::helix, ShapeKind::torus};
    std::size_t shape_points = 256;
    std::uint64_t shape_seed = 42;
    NetConfig net;
    TrainConfig train;
};

std::string training_run_to_json(const TrainingRunSpec& spec);
TrainingRunSpec training_run_from_json(const std::string& text);

/// Synthesizes the shapes and runs the full training loop.
TrainResult run_training(const TrainingRunSpec& spec);

/// Per-epoch loss curve: epoch,train_loss,val_loss,lr with the resolved
/// spec as header comments.
std::string history_to_csv(const TrainingRunSpec& spec, const TrainResult& result);

/// One evaluated pair: the per-pair seeds that generated it plus the four
/// metrics of the final estimate.
struct EvalRow {
    std::size_t index = 0;
    std::uint64_t transform_seed = 0;
    std::uint64_t perturb_seed = 0;
    EvalReport report;
};

struct EvalRun {
    std::vector<EvalRow> rows;
    EvalReport mean; // per-metric mean over rows
};

EvalReport mean_report(const std::vector<EvalRow>& rows);

/// Full test sweep: n_pairs independent pairs, agent run per pair, optional
/// ICP refinement, evaluated against ground truth. Pairs fan out across
/// worker threads; per-pair seeds are fixed up front so the row order and
/// content never depend on the thread count.
EvalRun run_eval(const ExperimentConfig& cfg);

/// Registers the pair at the given index of the sweep (same seeds as
/// run_eval) and reports its metrics.
EvalRow run_single(const ExperimentConfig& cfg, std::size_t pair_index);

/// CSV with the resolved config embedded as leading '#' comments, one row
/// per pair, and a final summary row labeled "mean".
std::string eval_to_csv(const ExperimentConfig& cfg, const EvalRun& run);

/// Registration trace of the first test pair: per-iteration action and
/// error columns, 60 data rows under the standard schedule.
std::string run_trace_csv(const ExperimentConfig& cfg);

/// Wall-clock timing of run_registration alone (no I/O, no evaluation).
struct TimingResult {
    std::size_t pairs = 0;
    double mean_ms = 0.0;
    double min_ms = 0.0;
    double max_ms = 0.0;
};

TimingResult run_timing(const ExperimentConfig& cfg);
std::string timing_to_csv(const ExperimentConfig& cfg, const TimingResult& t);

/// Rotation-sampler histogram: empirical angle distribution of a sampler
/// against the exact Haar CDF, plus the KS statistic as a comment.
std::string sample_rotation_csv(SampleMethod method, double max_angle, std::size_t samples,
                                std::size_t bins, std::uint64_t seed);

enum class AblationKind { reward, sampling, curriculum, policy };

AblationKind ablation_kind_from_string(const std::string& s);
const char* to_string(AblationKind k);

/// One comparison arm: its mean metrics over the shared test set, or the
/// error that stopped it (other arms still run).
struct AblationRow {
    std::string arm;
    std::size_t pairs = 0;
    EvalReport mean;
    std::string error;
};

/// Comparison grids. reward: the three oracles on one test set. policy:
/// deterministic / stoch1 / stoch2 on one test set. sampling: isotropic- vs
/// naive-trained networks on one shared naive-Euler 32-degree test set.
/// curriculum: staged / uniform / mixed-trained networks on one test set.
std::vector<AblationRow> run_ablation(AblationKind kind, const ExperimentConfig& cfg);

std::string ablation_to_csv(AblationKind kind, const ExperimentConfig& cfg,
                            const std::vector<AblationRow>& rows);

/// Synthetic dataset on disk: categories are shape families crossed with a
/// fixed set of anisotropic scale profiles, each cloud re-jittered. Writes
/// one .xyz file per cloud plus manifest.tsv; returns the manifest path.
std::string generate_dataset(const std::string& out_dir, std::size_t categories,
                             std::size_t clouds_per_category, std::size_t points,
                             std::uint64_t seed);

} // namespace pcreg
