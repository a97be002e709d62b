#include "pcreg/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pcreg/errors.hpp"
#include "pcreg/icp.hpp"

namespace pcreg {

namespace {

const char* size_class_name(SizeClass c) {
    return c == SizeClass::large_step ? "large" : "small";
}

SizeClass size_class_from_name(const std::string& s) {
    if (s == "large") return SizeClass::large_step;
    if (s == "small") return SizeClass::small_step;
    throw ValidationError("unknown size class: " + s);
}

const char* grouping_name(RewardGrouping g) {
    return g == RewardGrouping::by_size_class ? "by_size_class" : "by_magnitude";
}

RewardGrouping grouping_from_name(const std::string& s) {
    if (s == "by_magnitude") return RewardGrouping::by_magnitude;
    if (s == "by_size_class") return RewardGrouping::by_size_class;
    throw ValidationError("unknown reward grouping: " + s);
}

nlohmann::json perturbation_json(const PerturbationConfig& p) {
    return nlohmann::json{{"n_points", p.n_points},
                          {"noise_sigma", p.noise_sigma},
                          {"noise_clip", p.noise_clip},
                          {"independent_resample", p.independent_resample},
                          {"crop_fraction", p.crop_fraction},
                          {"partial_cap", p.partial_cap},
                          {"cap_before_crop", p.cap_before_crop}};
}

PerturbationConfig perturbation_from_json(const nlohmann::json& j, PerturbationConfig base) {
    base.n_points = j.value("n_points", base.n_points);
    base.noise_sigma = j.value("noise_sigma", base.noise_sigma);
    base.noise_clip = j.value("noise_clip", base.noise_clip);
    base.independent_resample = j.value("independent_resample", base.independent_resample);
    base.crop_fraction = j.value("crop_fraction", base.crop_fraction);
    base.partial_cap = j.value("partial_cap", base.partial_cap);
    base.cap_before_crop = j.value("cap_before_crop", base.cap_before_crop);
    return base;
}

nlohmann::json range_json(const RangeConfig& r) {
    return nlohmann::json{{"max_angle", r.max_angle}, {"max_translation", r.max_translation}};
}

RangeConfig range_from_json(const nlohmann::json& j, RangeConfig base) {
    base.max_angle = j.value("max_angle", base.max_angle);
    base.max_translation = j.value("max_translation", base.max_translation);
    return base;
}

nlohmann::json train_json(const TrainConfig& t) {
    return nlohmann::json{{"lr_initial", t.lr_initial},
                          {"lr_decay_epochs", t.lr_decay_epochs},
                          {"lr_decay_factor", t.lr_decay_factor},
                          {"weight_decay", t.weight_decay},
                          {"total_epochs", t.total_epochs},
                          {"curriculum_mode", to_string(t.curriculum_mode)},
                          {"curriculum_boundary_epoch", t.curriculum_boundary_epoch},
                          {"small_range", range_json(t.small_range)},
                          {"full_range", range_json(t.full_range)},
                          {"rotation_method", to_string(t.rotation_method)},
                          {"batch_size", t.batch_size},
                          {"samples_per_epoch", t.samples_per_epoch},
                          {"validation_pairs", t.validation_pairs},
                          {"target_grouping", grouping_name(t.target_grouping)},
                          {"source_pose_jitter", t.source_pose_jitter},
                          {"uniform_residual_angle", t.uniform_residual_angle},
                          {"seed", t.seed}};
}

TrainConfig train_from_json(const nlohmann::json& j, TrainConfig base) {
    base.lr_initial = j.value("lr_initial", base.lr_initial);
    base.lr_decay_epochs = j.value("lr_decay_epochs", base.lr_decay_epochs);
    base.lr_decay_factor = j.value("lr_decay_factor", base.lr_decay_factor);
    base.weight_decay = j.value("weight_decay", base.weight_decay);
    base.total_epochs = j.value("total_epochs", base.total_epochs);
    if (j.contains("curriculum_mode"))
        base.curriculum_mode = curriculum_mode_from_string(j.at("curriculum_mode"));
    base.curriculum_boundary_epoch =
        j.value("curriculum_boundary_epoch", base.curriculum_boundary_epoch);
    if (j.contains("small_range"))
        base.small_range = range_from_json(j.at("small_range"), base.small_range);
    if (j.contains("full_range"))
        base.full_range = range_from_json(j.at("full_range"), base.full_range);
    if (j.contains("rotation_method"))
        base.rotation_method = sample_method_from_string(j.at("rotation_method"));
    base.batch_size = j.value("batch_size", base.batch_size);
    base.samples_per_epoch = j.value("samples_per_epoch", base.samples_per_epoch);
    base.validation_pairs = j.value("validation_pairs", base.validation_pairs);
    if (j.contains("target_grouping"))
        base.target_grouping = grouping_from_name(j.at("target_grouping"));
    base.source_pose_jitter = j.value("source_pose_jitter", base.source_pose_jitter);
    base.uniform_residual_angle = j.value("uniform_residual_angle", base.uniform_residual_angle);
    base.seed = j.value("seed", base.seed);
    return base;
}

std::vector<std::string> shape_names(const std::vector<ShapeKind>& shapes) {
    std::vector<std::string> names;
    names.reserve(shapes.size());
    for (ShapeKind k : shapes) names.emplace_back(to_string(k));
    return names;
}

std::vector<ShapeKind> shapes_from_names(const std::vector<std::string>& names) {
    std::vector<ShapeKind> shapes;
    shapes.reserve(names.size());
    for (const std::string& n : names) shapes.push_back(shape_kind_from_string(n));
    return shapes;
}

nlohmann::json net_json(const NetConfig& n) {
    return nlohmann::json::parse(net_config_to_json(n));
}

} // namespace

Protocol protocol_from_string(const std::string& s) {
    if (s == "clean") return Protocol::clean;
    if (s == "noisy") return Protocol::noisy;
    if (s == "partial") return Protocol::partial;
    throw ValidationError("unknown protocol: " + s);
}

const char* to_string(Protocol p) {
    switch (p) {
    case Protocol::clean: return "clean";
    case Protocol::noisy: return "noisy";
    case Protocol::partial: return "partial";
    }
    throw ValidationError("unknown protocol value");
}

PerturbationConfig protocol_perturbation(Protocol p) {
    PerturbationConfig cfg;
    cfg.n_points = 1024;
    switch (p) {
    case Protocol::clean: break;
    case Protocol::noisy:
        cfg.noise_sigma = 0.01;
        cfg.noise_clip = 0.05;
        cfg.independent_resample = true;
        break;
    case Protocol::partial:
        cfg.noise_sigma = 0.01;
        cfg.noise_clip = 0.05;
        cfg.independent_resample = true;
        cfg.crop_fraction = 0.7;
        cfg.partial_cap = 717;
        break;
    }
    return cfg;
}

RewardSourceKind reward_source_kind_from_string(const std::string& s) {
    if (s == "oracle_se3") return RewardSourceKind::oracle_se3;
    if (s == "oracle_l2") return RewardSourceKind::oracle_l2;
    if (s == "oracle_mcd") return RewardSourceKind::oracle_mcd;
    if (s == "network") return RewardSourceKind::network;
    throw ValidationError("unknown reward source: " + s);
}

const char* to_string(RewardSourceKind k) {
    switch (k) {
    case RewardSourceKind::oracle_se3: return "oracle_se3";
    case RewardSourceKind::oracle_l2: return "oracle_l2";
    case RewardSourceKind::oracle_mcd: return "oracle_mcd";
    case RewardSourceKind::network: return "network";
    }
    throw ValidationError("unknown reward source value");
}

namespace {

// Per-worker reward source: oracles are stateless to construct; a network
// view shares the already-loaded parameters.
std::unique_ptr<RewardSource> instantiate_source(RewardSourceKind kind,
                                                 const NetworkParameters* params) {
    switch (kind) {
    case RewardSourceKind::oracle_se3: return std::make_unique<Se3OracleSource>();
    case RewardSourceKind::oracle_l2:
        return std::make_unique<PointOracleSource>(PointRewardKind::l2_clean);
    case RewardSourceKind::oracle_mcd:
        return std::make_unique<PointOracleSource>(PointRewardKind::mcd);
    case RewardSourceKind::network:
        if (!params) throw ValidationError("network reward source needs loaded weights");
        return std::make_unique<NetworkRewardSource>(*params);
    }
    throw ValidationError("unknown reward source value");
}

} // namespace

BoundRewardSource make_reward_source(RewardSourceKind kind, const std::string& weights_path) {
    BoundRewardSource bound;
    if (kind == RewardSourceKind::network) {
        if (weights_path.empty())
            throw ValidationError("network reward source needs a weights path");
        bound.params = std::make_unique<NetworkParameters>(load_weights(weights_path));
    }
    bound.source = instantiate_source(kind, bound.params.get());
    return bound;
}

void DatasetSpec::validate() const {
    if (shape_points == 0) throw ValidationError("DatasetSpec: shape_points must be positive");
    if (manifest.empty() && shapes.empty())
        throw ValidationError("DatasetSpec: synthetic mode needs at least one shape");
    if (split != "train" && split != "val" && split != "test")
        throw ValidationError("DatasetSpec: split must be train, val or test");
}

AblationTrainSpec::AblationTrainSpec() {
    net.n_points = 32;
    net.knn_k = 4;
    net.edgeconv_widths = {12, 12};
    net.embed_dim = 12;
    net.attn_heads = 2;
    net.shared_mlp_widths = {24};
    net.head_mlp_widths = {12};

    train.lr_initial = 0.1;
    train.lr_decay_epochs = {};
    train.total_epochs = 24;
    train.curriculum_boundary_epoch = 8;
    train.full_range = RangeConfig{deg_to_rad(28.0), 0.15};
    train.samples_per_epoch = 48;
    train.validation_pairs = 8;
    train.target_grouping = RewardGrouping::by_size_class;
    train.source_pose_jitter = deg_to_rad(30.0);
    train.uniform_residual_angle = true;
}

ExperimentConfig::ExperimentConfig() {
    transform.method = SampleMethod::haar;
    transform.max_angle = deg_to_rad(60.0);
    transform.max_translation = 0.5;
    perturbation = protocol_perturbation(Protocol::clean);
}

void ExperimentConfig::validate() const {
    if (n_pairs == 0) throw ValidationError("ExperimentConfig: n_pairs must be positive");
    if (!(transform.max_angle > 0.0) || !(transform.max_angle <= kPi))
        throw ValidationError("ExperimentConfig: transform.max_angle must be in (0, pi]");
    if (!(transform.max_translation >= 0.0))
        throw ValidationError("ExperimentConfig: transform.max_translation must be >= 0");
    if (schedule.total_iterations() == 0)
        throw ValidationError("ExperimentConfig: schedule has no iterations");
    if (perturbation.n_points == 0)
        throw ValidationError("ExperimentConfig: perturbation.n_points must be positive");
    if (reward == RewardSourceKind::network && weights.empty())
        throw ValidationError("ExperimentConfig: network reward source needs a weights path");
    dataset.validate();

    // The protocol pins the perturbation pipeline; only the point budget may
    // deviate (desk-scale networks read fewer points), and the partial
    // protocol additionally pins its crop fraction and observed count.
    const PerturbationConfig want = protocol_perturbation(protocol);
    auto fail = [&](const char* what) {
        throw ValidationError(std::string("ExperimentConfig: ") + to_string(protocol) +
                              " protocol pins " + what);
    };
    if (perturbation.noise_sigma != want.noise_sigma) fail("noise_sigma");
    if (perturbation.noise_clip != want.noise_clip) fail("noise_clip");
    if (perturbation.independent_resample != want.independent_resample)
        fail("independent_resample");
    if (perturbation.crop_fraction != want.crop_fraction) fail("crop_fraction");
    if (perturbation.partial_cap != want.partial_cap) fail("partial_cap");
    if (perturbation.cap_before_crop != want.cap_before_crop) fail("cap_before_crop");
}

std::string experiment_to_json(const ExperimentConfig& cfg) {
    nlohmann::json phases = nlohmann::json::array();
    for (const SchedulePhase& p : cfg.schedule.phases)
        phases.push_back(nlohmann::json{{"iterations", p.iterations},
                                        {"allowed", size_class_name(p.allowed)}});

    nlohmann::json j{
        {"protocol", to_string(cfg.protocol)},
        {"transform",
         {{"method", to_string(cfg.transform.method)},
          {"max_angle", cfg.transform.max_angle},
          {"max_translation", cfg.transform.max_translation}}},
        {"perturbation", perturbation_json(cfg.perturbation)},
        {"policy",
         {{"kind", to_string(cfg.policy.kind)},
          {"stoch1_probs", cfg.policy.stoch1_probs}}},
        {"schedule", phases},
        {"reward", to_string(cfg.reward)},
        {"weights", cfg.weights},
        {"refine_icp", cfg.refine_icp},
        {"dataset",
         {{"shapes", shape_names(cfg.dataset.shapes)},
          {"shape_points", cfg.dataset.shape_points},
          {"manifest", cfg.dataset.manifest},
          {"split", cfg.dataset.split}}},
        {"ablation_train",
         {{"shapes", shape_names(cfg.ablation_train.shapes)},
          {"net", net_json(cfg.ablation_train.net)},
          {"train", train_json(cfg.ablation_train.train)}}},
        {"n_pairs", cfg.n_pairs},
        {"output", cfg.output},
        {"seed", cfg.seed}};
    return j.dump();
}

ExperimentConfig experiment_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("experiment config: ") + e.what());
    }

    ExperimentConfig cfg;
    try {
        if (j.contains("protocol")) {
            cfg.protocol = protocol_from_string(j.at("protocol"));
            cfg.perturbation = protocol_perturbation(cfg.protocol);
        }
        if (j.contains("transform")) {
            const nlohmann::json& t = j.at("transform");
            if (t.contains("method"))
                cfg.transform.method = sample_method_from_string(t.at("method"));
            cfg.transform.max_angle = t.value("max_angle", cfg.transform.max_angle);
            cfg.transform.max_translation =
                t.value("max_translation", cfg.transform.max_translation);
        }
        if (j.contains("perturbation"))
            cfg.perturbation = perturbation_from_json(j.at("perturbation"), cfg.perturbation);
        if (j.contains("policy")) {
            const nlohmann::json& p = j.at("policy");
            if (p.contains("kind")) cfg.policy.kind = policy_kind_from_string(p.at("kind"));
            if (p.contains("stoch1_probs"))
                cfg.policy.stoch1_probs = p.at("stoch1_probs").get<std::array<double, 3>>();
        }
        if (j.contains("schedule")) {
            cfg.schedule.phases.clear();
            for (const nlohmann::json& p : j.at("schedule"))
                cfg.schedule.phases.push_back(SchedulePhase{
                    p.at("iterations").get<std::size_t>(),
                    size_class_from_name(p.at("allowed").get<std::string>())});
        }
        if (j.contains("reward")) cfg.reward = reward_source_kind_from_string(j.at("reward"));
        cfg.weights = j.value("weights", cfg.weights);
        cfg.refine_icp = j.value("refine_icp", cfg.refine_icp);
        if (j.contains("dataset")) {
            const nlohmann::json& d = j.at("dataset");
            if (d.contains("shapes"))
                cfg.dataset.shapes =
                    shapes_from_names(d.at("shapes").get<std::vector<std::string>>());
            cfg.dataset.shape_points = d.value("shape_points", cfg.dataset.shape_points);
            cfg.dataset.manifest = d.value("manifest", cfg.dataset.manifest);
            cfg.dataset.split = d.value("split", cfg.dataset.split);
        }
        if (j.contains("ablation_train")) {
            const nlohmann::json& a = j.at("ablation_train");
            if (a.contains("shapes"))
                cfg.ablation_train.shapes =
                    shapes_from_names(a.at("shapes").get<std::vector<std::string>>());
            if (a.contains("net"))
                cfg.ablation_train.net = net_config_from_json(a.at("net").dump());
            if (a.contains("train"))
                cfg.ablation_train.train =
                    train_from_json(a.at("train"), cfg.ablation_train.train);
        }
        cfg.n_pairs = j.value("n_pairs", cfg.n_pairs);
        cfg.output = j.value("output", cfg.output);
        cfg.seed = j.value("seed", cfg.seed);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("experiment config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ManifestSplit split_manifest(const std::vector<ManifestEntry>& entries, double val_fraction) {
    if (!(val_fraction >= 0.0) || !(val_fraction < 1.0))
        throw ValidationError("split_manifest: val_fraction must be in [0, 1)");
    if (entries.empty()) throw DataError("split_manifest: manifest has no entries");

    std::vector<std::string> categories;
    for (const ManifestEntry& e : entries) {
        if (e.category.empty()) throw DataError("split_manifest: entry without category");
        if (std::find(categories.begin(), categories.end(), e.category) == categories.end())
            categories.push_back(e.category);
    }
    if (categories.size() < 2)
        throw DataError("split_manifest: need at least two categories to hold one out");

    // Categories in first-appearance order; the front half trains, the back
    // half is never seen before test.
    const std::size_t n_train_cats = (categories.size() + 1) / 2;
    auto is_train_category = [&](const std::string& c) {
        const auto it = std::find(categories.begin(), categories.end(), c);
        return static_cast<std::size_t>(it - categories.begin()) < n_train_cats;
    };

    ManifestSplit split;
    std::size_t train_side = 0;
    for (const ManifestEntry& e : entries) {
        if (!is_train_category(e.category)) {
            split.test.push_back(e);
            continue;
        }
        // Deterministic stride keeps val at val_fraction of the train side.
        const double before = std::floor(static_cast<double>(train_side) * val_fraction);
        const double after = std::floor(static_cast<double>(train_side + 1) * val_fraction);
        ++train_side;
        if (after > before)
            split.val.push_back(e);
        else
            split.train.push_back(e);
    }
    return split;
}

std::vector<PointCloud> load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    std::vector<PointCloud> clouds;

    if (spec.manifest.empty()) {
        clouds.reserve(spec.shapes.size());
        for (ShapeKind kind : spec.shapes)
            clouds.push_back(synth_shape(kind, spec.shape_points, rng));
        return clouds;
    }

    const std::vector<ManifestEntry> entries = read_manifest(spec.manifest);
    const ManifestSplit split = split_manifest(entries);
    const std::vector<ManifestEntry>* chosen = &split.test;
    if (spec.split == "train") chosen = &split.train;
    if (spec.split == "val") chosen = &split.val;
    if (chosen->empty())
        throw DataError("load_dataset: split '" + spec.split + "' of " + spec.manifest +
                        " is empty");

    const std::filesystem::path base = std::filesystem::path(spec.manifest).parent_path();
    clouds.reserve(chosen->size());
    for (const ManifestEntry& e : *chosen) {
        std::filesystem::path p(e.file);
        if (p.is_relative()) p = base / p;
        clouds.push_back(read_cloud(p.string(), cloud_format_from_path(p.string()),
                                    spec.shape_points, rng));
    }
    return clouds;
}

namespace {

// Everything needed to rebuild one test pair, fixed up front so the fan-out
// across workers cannot change what any pair looks like.
struct PairJob {
    std::size_t shape_index = 0;
    std::uint64_t transform_seed = 0;
    std::uint64_t perturb_seed = 0;
    std::uint64_t policy_seed = 0;
};

std::vector<PairJob> make_jobs(const ExperimentConfig& cfg, std::size_t n_shapes) {
    Rng master(cfg.seed);
    std::vector<PairJob> jobs(cfg.n_pairs);
    for (std::size_t i = 0; i < cfg.n_pairs; ++i) {
        jobs[i].shape_index = i % n_shapes;
        jobs[i].transform_seed = master.next_u64();
        jobs[i].perturb_seed = master.next_u64();
        jobs[i].policy_seed = master.next_u64();
    }
    return jobs;
}

CloudPair build_pair(const ExperimentConfig& cfg, const std::vector<PointCloud>& dataset,
                     const PairJob& job) {
    TransformSampleConfig tcfg = cfg.transform;
    tcfg.seed = job.transform_seed;
    PerturbationConfig pcfg = cfg.perturbation;
    pcfg.seed = job.perturb_seed;
    return make_pair(dataset[job.shape_index], tcfg, pcfg);
}

// Runs the agent on already-built pairs, one reward source instance per
// worker, rows written by pair index so merge order is the input order.
std::vector<EvalRow> evaluate_pairs(const ExperimentConfig& cfg,
                                    const std::vector<CloudPair>& pairs,
                                    const std::vector<PairJob>& jobs,
                                    RewardSourceKind reward_kind,
                                    const NetworkParameters* params,
                                    const PolicySpec& policy) {
    std::vector<EvalRow> rows(pairs.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::string first_error;

    auto worker = [&]() {
        const std::unique_ptr<RewardSource> source = instantiate_source(reward_kind, params);
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= pairs.size()) return;
            try {
                PolicySpec pol = policy;
                pol.seed = jobs[i].policy_seed;
                const RegistrationResult res = run_registration(
                    *source, pairs[i], cfg.schedule, pol, /*trace_chamfer=*/false);
                RigidTransform est = to_rigid_transform(res.estimate);
                if (cfg.refine_icp) est = refine_v2(pairs[i], est);
                rows[i] = EvalRow{i, jobs[i].transform_seed, jobs[i].perturb_seed,
                                  evaluate(pairs[i], est)};
            } catch (const std::exception& e) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (first_error.empty())
                    first_error = "pair " + std::to_string(i) + ": " + e.what();
                return;
            }
        }
    };

    // PCREG_THREADS overrides the detected core count (0 / unset: detect).
    std::size_t hw = std::thread::hardware_concurrency();
    if (const char* env = std::getenv("PCREG_THREADS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end && *end == '\0' && v > 0) hw = v;
    }
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(hw, pairs.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }
    if (!first_error.empty()) throw DataError("evaluate_pairs: " + first_error);
    return rows;
}

std::vector<CloudPair> build_pairs(const ExperimentConfig& cfg,
                                   const std::vector<PointCloud>& dataset,
                                   const std::vector<PairJob>& jobs) {
    std::vector<CloudPair> pairs;
    pairs.reserve(jobs.size());
    for (const PairJob& job : jobs) pairs.push_back(build_pair(cfg, dataset, job));
    return pairs;
}

void append_config_comments(std::ostringstream& out, const ExperimentConfig& cfg,
                            const char* command) {
    out << "# pcreg " << command << "\n";
    out << "# config = " << experiment_to_json(cfg) << "\n";
    out << "# seed = " << cfg.seed << "\n";
}

} // namespace

EvalReport mean_report(const std::vector<EvalRow>& rows) {
    EvalReport mean;
    if (rows.empty()) return mean;
    for (const EvalRow& r : rows) {
        mean.rot_err_deg += r.report.rot_err_deg;
        mean.trans_err += r.report.trans_err;
        mean.clean_l2 += r.report.clean_l2;
        mean.mcd += r.report.mcd;
    }
    const double n = static_cast<double>(rows.size());
    mean.rot_err_deg /= n;
    mean.trans_err /= n;
    mean.clean_l2 /= n;
    mean.mcd /= n;
    return mean;
}

std::string training_run_to_json(const TrainingRunSpec& spec) {
    nlohmann::json j{{"shapes", shape_names(spec.shapes)},
                     {"shape_points", spec.shape_points},
                     {"shape_seed", spec.shape_seed},
                     {"net", net_json(spec.net)},
                     {"train", train_json(spec.train)}};
    return j.dump();
}

TrainingRunSpec training_run_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("training config: ") + e.what());
    }
    TrainingRunSpec spec;
    try {
        if (j.contains("shapes"))
            spec.shapes = shapes_from_names(j.at("shapes").get<std::vector<std::string>>());
        spec.shape_points = j.value("shape_points", spec.shape_points);
        spec.shape_seed = j.value("shape_seed", spec.shape_seed);
        if (j.contains("net")) spec.net = net_config_from_json(j.at("net").dump());
        if (j.contains("train")) spec.train = train_from_json(j.at("train"), spec.train);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("training config: ") + e.what());
    }
    if (spec.shapes.empty()) throw ValidationError("training config: no shapes");
    if (spec.shape_points == 0)
        throw ValidationError("training config: shape_points must be positive");
    spec.net.validate();
    spec.train.validate();
    return spec;
}

TrainResult run_training(const TrainingRunSpec& spec) {
    Rng rng(spec.shape_seed);
    std::vector<PointCloud> shapes;
    shapes.reserve(spec.shapes.size());
    for (ShapeKind kind : spec.shapes) shapes.push_back(synth_shape(kind, spec.shape_points, rng));
    return train(shapes, spec.train, spec.net);
}

std::string history_to_csv(const TrainingRunSpec& spec, const TrainResult& result) {
    std::ostringstream out;
    out.precision(17);
    out << "# pcreg train\n";
    out << "# config = " << training_run_to_json(spec) << "\n";
    out << "epoch,train_loss,val_loss,lr\n";
    for (std::size_t e = 0; e < result.history.size(); ++e)
        out << e << ',' << result.history[e].train_loss << ',' << result.history[e].val_loss
            << ',' << result.history[e].lr << '\n';
    return out.str();
}

EvalRun run_eval(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<PointCloud> dataset = load_dataset(cfg.dataset, cfg.seed);
    const std::vector<PairJob> jobs = make_jobs(cfg, dataset.size());
    const std::vector<CloudPair> pairs = build_pairs(cfg, dataset, jobs);
    const BoundRewardSource bound = make_reward_source(cfg.reward, cfg.weights);

    EvalRun run;
    run.rows = evaluate_pairs(cfg, pairs, jobs, cfg.reward, bound.params.get(), cfg.policy);
    run.mean = mean_report(run.rows);
    return run;
}

EvalRow run_single(const ExperimentConfig& cfg, std::size_t pair_index) {
    cfg.validate();
    if (pair_index >= cfg.n_pairs)
        throw ValidationError("run_single: pair_index outside the sweep");
    const std::vector<PointCloud> dataset = load_dataset(cfg.dataset, cfg.seed);
    const std::vector<PairJob> jobs = make_jobs(cfg, dataset.size());
    const PairJob& job = jobs[pair_index];
    const CloudPair pair = build_pair(cfg, dataset, job);
    const BoundRewardSource bound = make_reward_source(cfg.reward, cfg.weights);

    PolicySpec pol = cfg.policy;
    pol.seed = job.policy_seed;
    const RegistrationResult res =
        run_registration(*bound.source, pair, cfg.schedule, pol, /*trace_chamfer=*/false);
    RigidTransform est = to_rigid_transform(res.estimate);
    if (cfg.refine_icp) est = refine_v2(pair, est);
    return EvalRow{pair_index, job.transform_seed, job.perturb_seed, evaluate(pair, est)};
}

std::string eval_to_csv(const ExperimentConfig& cfg, const EvalRun& run) {
    std::ostringstream out;
    out.precision(17);
    append_config_comments(out, cfg, "eval");
    out << "index,transform_seed,perturb_seed,rot_err_deg,trans_err,clean_l2,mcd\n";
    for (const EvalRow& r : run.rows)
        out << r.index << ',' << r.transform_seed << ',' << r.perturb_seed << ','
            << r.report.rot_err_deg << ',' << r.report.trans_err << ',' << r.report.clean_l2
            << ',' << r.report.mcd << '\n';
    out << "mean,,," << run.mean.rot_err_deg << ',' << run.mean.trans_err << ','
        << run.mean.clean_l2 << ',' << run.mean.mcd << '\n';
    return out.str();
}

std::string run_trace_csv(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<PointCloud> dataset = load_dataset(cfg.dataset, cfg.seed);
    const std::vector<PairJob> jobs = make_jobs(cfg, dataset.size());
    const CloudPair pair = build_pair(cfg, dataset, jobs[0]);
    const BoundRewardSource bound = make_reward_source(cfg.reward, cfg.weights);

    PolicySpec pol = cfg.policy;
    pol.seed = jobs[0].policy_seed;
    const RegistrationResult res =
        run_registration(*bound.source, pair, cfg.schedule, pol, /*trace_chamfer=*/true);

    std::ostringstream out;
    out.precision(17);
    append_config_comments(out, cfg, "trace");
    out << trace_to_csv(res.trace, bound.source->actions());
    return out.str();
}

TimingResult run_timing(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<PointCloud> dataset = load_dataset(cfg.dataset, cfg.seed);
    const std::vector<PairJob> jobs = make_jobs(cfg, dataset.size());
    const std::vector<CloudPair> pairs = build_pairs(cfg, dataset, jobs);
    const BoundRewardSource bound = make_reward_source(cfg.reward, cfg.weights);

    TimingResult t;
    t.pairs = pairs.size();
    double sum_ms = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        PolicySpec pol = cfg.policy;
        pol.seed = jobs[i].policy_seed;
        const auto t0 = std::chrono::steady_clock::now();
        run_registration(*bound.source, pairs[i], cfg.schedule, pol, /*trace_chamfer=*/false);
        const auto t1 = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        sum_ms += ms;
        if (i == 0 || ms < t.min_ms) t.min_ms = ms;
        if (i == 0 || ms > t.max_ms) t.max_ms = ms;
    }
    t.mean_ms = sum_ms / static_cast<double>(pairs.size());
    return t;
}

std::string timing_to_csv(const ExperimentConfig& cfg, const TimingResult& t) {
    std::ostringstream out;
    out.precision(17);
    append_config_comments(out, cfg, "time");
    out << "pairs,mean_ms,min_ms,max_ms\n";
    out << t.pairs << ',' << t.mean_ms << ',' << t.min_ms << ',' << t.max_ms << '\n';
    return out.str();
}

std::string sample_rotation_csv(SampleMethod method, double max_angle, std::size_t samples,
                                std::size_t bins, std::uint64_t seed) {
    if (samples == 0) throw ValidationError("sample_rotation_csv: samples must be positive");
    if (bins == 0) throw ValidationError("sample_rotation_csv: bins must be positive");
    if (!(max_angle > 0.0) || !(max_angle <= kPi))
        throw ValidationError("sample_rotation_csv: max_angle must be in (0, pi]");

    Rng rng(seed);
    const RotationMatrix eye = RotationMatrix::identity();
    std::vector<double> angles(samples);
    for (double& a : angles) {
        const RotationMatrix r = method == SampleMethod::haar
                                     ? sample_rotation_haar(rng, max_angle)
                                     : sample_rotation_naive(rng, max_angle);
        a = rotation_distance(r, eye);
    }

    // Euler draws compose past the per-axis cap, so the histogram support is
    // the observed range, not the cap.
    double upper = max_angle;
    for (double a : angles) upper = std::max(upper, a);
    const double ks = haar_angle_ks_statistic(angles, upper);

    std::vector<std::size_t> counts(bins, 0);
    for (double a : angles) {
        std::size_t b = static_cast<std::size_t>(std::floor(a / upper * static_cast<double>(bins)));
        if (b >= bins) b = bins - 1;
        ++counts[b];
    }

    std::ostringstream out;
    out.precision(17);
    out << "# pcreg sample-rot\n";
    out << "# method = " << to_string(method) << "\n";
    out << "# max_angle = " << max_angle << "\n";
    out << "# samples = " << samples << "\n";
    out << "# seed = " << seed << "\n";
    out << "# ks_vs_truncated_haar = " << ks << "\n";
    out << "bin_lo,bin_hi,count,empirical_cdf,haar_cdf\n";
    std::size_t cum = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        const double lo = upper * static_cast<double>(b) / static_cast<double>(bins);
        const double hi = upper * static_cast<double>(b + 1) / static_cast<double>(bins);
        cum += counts[b];
        out << lo << ',' << hi << ',' << counts[b] << ','
            << static_cast<double>(cum) / static_cast<double>(samples) << ','
            << haar_angle_cdf(hi, upper) << '\n';
    }
    return out.str();
}

AblationKind ablation_kind_from_string(const std::string& s) {
    if (s == "reward") return AblationKind::reward;
    if (s == "sampling") return AblationKind::sampling;
    if (s == "curriculum") return AblationKind::curriculum;
    if (s == "policy") return AblationKind::policy;
    throw ValidationError("unknown ablation kind: " + s);
}

const char* to_string(AblationKind k) {
    switch (k) {
    case AblationKind::reward: return "reward";
    case AblationKind::sampling: return "sampling";
    case AblationKind::curriculum: return "curriculum";
    case AblationKind::policy: return "policy";
    }
    throw ValidationError("unknown ablation kind value");
}

namespace {

// Arms that fit a network evaluate on pairs the network can read, so the
// shared test set shrinks to the ablation net's point budget.
ExperimentConfig ablation_eval_config(const ExperimentConfig& cfg, AblationKind kind) {
    ExperimentConfig eval_cfg = cfg;
    if (kind == AblationKind::sampling) {
        // The biased-sampler comparison runs on a naive-Euler test set whose
        // per-axis cap of 32 degrees composes to roughly the 60-degree
        // axis-angle cap of the isotropic draw.
        eval_cfg.transform.method = SampleMethod::naive_euler;
        eval_cfg.transform.max_angle = deg_to_rad(32.0);
    }
    if (kind == AblationKind::sampling || kind == AblationKind::curriculum)
        eval_cfg.perturbation.n_points = cfg.ablation_train.net.n_points;
    return eval_cfg;
}

std::vector<PointCloud> ablation_train_shapes(const ExperimentConfig& cfg) {
    // Distinct stream from the test-pair seeds so train shapes are not the
    // byte-identical clouds the test set subsamples.
    Rng rng(Rng(cfg.seed).derive(17).next_u64());
    std::vector<PointCloud> shapes;
    shapes.reserve(cfg.ablation_train.shapes.size());
    for (ShapeKind kind : cfg.ablation_train.shapes)
        shapes.push_back(synth_shape(kind, 256, rng));
    return shapes;
}

} // namespace

std::vector<AblationRow> run_ablation(AblationKind kind, const ExperimentConfig& cfg) {
    cfg.validate();
    const ExperimentConfig eval_cfg = ablation_eval_config(cfg, kind);
    const std::vector<PointCloud> dataset = load_dataset(eval_cfg.dataset, eval_cfg.seed);
    const std::vector<PairJob> jobs = make_jobs(eval_cfg, dataset.size());
    const std::vector<CloudPair> pairs = build_pairs(eval_cfg, dataset, jobs);

    struct Arm {
        std::string name;
        RewardSourceKind reward;
        PolicySpec policy;
        bool trains = false;
        TrainConfig train;
    };
    std::vector<Arm> arms;

    switch (kind) {
    case AblationKind::reward:
        for (RewardSourceKind r : {RewardSourceKind::oracle_se3, RewardSourceKind::oracle_l2,
                                   RewardSourceKind::oracle_mcd})
            arms.push_back(Arm{to_string(r), r, cfg.policy, false, {}});
        break;
    case AblationKind::policy:
        for (PolicyKind p : {PolicyKind::greedy, PolicyKind::stoch1, PolicyKind::stoch2}) {
            PolicySpec pol = cfg.policy;
            pol.kind = p;
            arms.push_back(Arm{p == PolicyKind::greedy ? "deterministic" : to_string(p),
                               cfg.reward, pol, false, {}});
        }
        break;
    case AblationKind::sampling: {
        TrainConfig iso = cfg.ablation_train.train;
        iso.rotation_method = SampleMethod::haar;
        TrainConfig naive = cfg.ablation_train.train;
        naive.rotation_method = SampleMethod::naive_euler;
        naive.full_range.max_angle = deg_to_rad(32.0);
        naive.uniform_residual_angle = false; // the flag only shapes haar draws
        arms.push_back(Arm{"isotropic", RewardSourceKind::network, cfg.policy, true, iso});
        arms.push_back(Arm{"naive", RewardSourceKind::network, cfg.policy, true, naive});
        break;
    }
    case AblationKind::curriculum:
        for (CurriculumMode m :
             {CurriculumMode::staged, CurriculumMode::uniform, CurriculumMode::mixed}) {
            TrainConfig t = cfg.ablation_train.train;
            t.curriculum_mode = m;
            const char* name = m == CurriculumMode::staged    ? "curriculum"
                               : m == CurriculumMode::uniform ? "uniform"
                                                              : "ad-hoc";
            arms.push_back(Arm{name, RewardSourceKind::network, cfg.policy, true, t});
        }
        break;
    }

    std::vector<PointCloud> train_shapes;
    if (kind == AblationKind::sampling || kind == AblationKind::curriculum)
        train_shapes = ablation_train_shapes(cfg);

    std::vector<AblationRow> rows;
    rows.reserve(arms.size());
    for (const Arm& arm : arms) {
        AblationRow row;
        row.arm = arm.name;
        try {
            std::unique_ptr<NetworkParameters> params;
            if (arm.trains) {
                const TrainResult tr = train(train_shapes, arm.train, cfg.ablation_train.net);
                params = std::make_unique<NetworkParameters>(tr.params);
            } else if (arm.reward == RewardSourceKind::network) {
                params = std::make_unique<NetworkParameters>(load_weights(cfg.weights));
            }
            const std::vector<EvalRow> eval_rows =
                evaluate_pairs(eval_cfg, pairs, jobs, arm.reward, params.get(), arm.policy);
            row.pairs = eval_rows.size();
            row.mean = mean_report(eval_rows);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_to_csv(AblationKind kind, const ExperimentConfig& cfg,
                            const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    append_config_comments(out, cfg, "ablate");
    out << "# kind = " << to_string(kind) << "\n";
    out << "arm,pairs,rot_err_deg,trans_err,clean_l2,mcd,error\n";
    for (const AblationRow& r : rows) {
        std::string err = r.error;
        for (std::size_t pos = 0; (pos = err.find('"', pos)) != std::string::npos; pos += 2)
            err.replace(pos, 1, "\"\"");
        out << r.arm << ',' << r.pairs << ',' << r.mean.rot_err_deg << ',' << r.mean.trans_err
            << ',' << r.mean.clean_l2 << ',' << r.mean.mcd << ',';
        if (!err.empty()) out << '"' << err << '"';
        out << '\n';
    }
    return out.str();
}

std::string generate_dataset(const std::string& out_dir, std::size_t categories,
                             std::size_t clouds_per_category, std::size_t points,
                             std::uint64_t seed) {
    if (categories == 0) throw ValidationError("generate_dataset: categories must be positive");
    if (clouds_per_category == 0)
        throw ValidationError("generate_dataset: clouds_per_category must be positive");
    if (points == 0) throw ValidationError("generate_dataset: points must be positive");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw DataError("generate_dataset: cannot create " + out_dir + ": " + ec.message());

    // Families cross scale profiles: every category is a shape family in a
    // distinct aspect regime, and every cloud re-jitters the axis scales.
    constexpr ShapeKind kFamilies[] = {ShapeKind::sphere, ShapeKind::box, ShapeKind::helix,
                                       ShapeKind::torus};
    struct Profile {
        const char* name;
        Vec3 scale;
    };
    constexpr Profile kProfiles[] = {{"uniform", {1.0, 1.0, 1.0}},
                                     {"tall", {1.0, 1.0, 1.45}},
                                     {"flat", {1.0, 1.0, 0.62}},
                                     {"skew", {1.3, 0.8, 1.05}}};

    Rng rng(seed);
    std::vector<ManifestEntry> entries;
    entries.reserve(categories * clouds_per_category);
    for (std::size_t c = 0; c < categories; ++c) {
        const ShapeKind kind = kFamilies[c % 4];
        const Profile& prof = kProfiles[(c / 4) % 4];
        char cat[64];
        std::snprintf(cat, sizeof cat, "cat%02zu_%s_%s", c, to_string(kind), prof.name);
        for (std::size_t i = 0; i < clouds_per_category; ++i) {
            PointCloud cloud = synth_shape(kind, points, rng);
            const Vec3 s{prof.scale.x * rng.uniform(0.9, 1.1),
                         prof.scale.y * rng.uniform(0.9, 1.1),
                         prof.scale.z * rng.uniform(0.9, 1.1)};
            for (Vec3& p : cloud.points) {
                p.x *= s.x;
                p.y *= s.y;
                p.z *= s.z;
            }
            char file[96];
            std::snprintf(file, sizeof file, "%s_%02zu.xyz", cat, i);
            write_cloud((std::filesystem::path(out_dir) / file).string(), cloud,
                        CloudFormat::xyz);
            entries.push_back(ManifestEntry{file, cat});
        }
    }
    const std::string manifest = (std::filesystem::path(out_dir) / "manifest.tsv").string();
    write_manifest(manifest, entries);
    return manifest;
}

} // namespace pcreg
