#include "pcreg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "pcreg/errors.hpp"
#include "pcreg/kernels.hpp"
#include "pcreg/rotsample.hpp"

namespace pcreg {

namespace {

constexpr char kMagic[8] = {'P', 'C', 'R', 'E', 'G', 'N', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    const std::uint64_t bits = get_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

nlohmann::json config_json(const NetConfig& cfg) {
    return nlohmann::json{{"n_points", cfg.n_points},
                          {"knn_k", cfg.knn_k},
                          {"edgeconv_widths", cfg.edgeconv_widths},
                          {"embed_dim", cfg.embed_dim},
                          {"attn_heads", cfg.attn_heads},
                          {"shared_mlp_widths", cfg.shared_mlp_widths},
                          {"head_mlp_widths", cfg.head_mlp_widths},
                          {"n_actions", cfg.n_actions},
                          {"fuse_difference", cfg.fuse_difference}};
}

NetConfig config_from_json(const nlohmann::json& j) {
    NetConfig cfg;
    try {
        cfg.n_points = j.at("n_points").get<std::size_t>();
        cfg.knn_k = j.at("knn_k").get<std::size_t>();
        cfg.edgeconv_widths = j.at("edgeconv_widths").get<std::vector<std::size_t>>();
        cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
        cfg.attn_heads = j.at("attn_heads").get<std::size_t>();
        cfg.shared_mlp_widths = j.at("shared_mlp_widths").get<std::vector<std::size_t>>();
        cfg.head_mlp_widths = j.at("head_mlp_widths").get<std::vector<std::size_t>>();
        cfg.n_actions = j.at("n_actions").get<std::size_t>();
        cfg.fuse_difference = j.value("fuse_difference", false);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("net config json: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

} // namespace

CurriculumMode curriculum_mode_from_string(const std::string& s) {
    if (s == "staged") return CurriculumMode::staged;
    if (s == "uniform") return CurriculumMode::uniform;
    if (s == "mixed") return CurriculumMode::mixed;
    throw ValidationError("unknown curriculum mode: " + s);
}

const char* to_string(CurriculumMode m) {
    switch (m) {
    case CurriculumMode::staged: return "staged";
    case CurriculumMode::uniform: return "uniform";
    case CurriculumMode::mixed: return "mixed";
    }
    throw ValidationError("unknown curriculum mode value");
}

void TrainConfig::validate() const {
    if (!(lr_initial > 0.0)) throw ValidationError("TrainConfig: lr_initial must be positive");
    if (!(lr_decay_factor > 0.0))
        throw ValidationError("TrainConfig: lr_decay_factor must be positive");
    if (!(weight_decay >= 0.0))
        throw ValidationError("TrainConfig: weight_decay must be non-negative");
    if (total_epochs == 0) throw ValidationError("TrainConfig: total_epochs must be positive");
    if (batch_size == 0) throw ValidationError("TrainConfig: batch_size must be positive");
    if (samples_per_epoch == 0)
        throw ValidationError("TrainConfig: samples_per_epoch must be positive");
    if (!(small_range.max_angle > 0.0) || !(full_range.max_angle > 0.0))
        throw ValidationError("TrainConfig: range angles must be positive");
    if (!(small_range.max_translation >= 0.0) || !(full_range.max_translation >= 0.0))
        throw ValidationError("TrainConfig: range translations must be non-negative");
    if (!(source_pose_jitter >= 0.0) || !(source_pose_jitter <= kPi))
        throw ValidationError("TrainConfig: source_pose_jitter must be in [0, pi]");
    if (!std::is_sorted(lr_decay_epochs.begin(), lr_decay_epochs.end()))
        throw ValidationError("TrainConfig: lr_decay_epochs must be sorted");
}

double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
    double lr = cfg.lr_initial;
    for (std::size_t boundary : cfg.lr_decay_epochs)
        if (epoch >= boundary) lr *= cfg.lr_decay_factor;
    return lr;
}

void sgd_step(NetworkParameters& params, const std::vector<double>& gradients, double lr) {
    if (gradients.size() != params.size())
        throw ValidationError("sgd_step: gradient size mismatch");
    kernels::active().axpy(-lr, gradients.data(), params.flat().data(), params.size());
}

namespace {

// Axis uniform on the sphere, angle uniform in [0, max_angle]. Unlike the
// Haar draw this keeps density at small deflections.
RotationMatrix sample_rotation_uniform_angle(Rng& rng, double max_angle) {
    Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
    double norm = std::sqrt(axis.x * axis.x + axis.y * axis.y + axis.z * axis.z);
    if (norm < 1e-12) {
        axis = Vec3{1.0, 0.0, 0.0};
        norm = 1.0;
    }
    axis.x /= norm;
    axis.y /= norm;
    axis.z /= norm;
    return rotation_from_axis_angle_unchecked(axis, rng.uniform(0.0, max_angle));
}

} // namespace

TrainingSample draw_training_sample(const std::vector<PointCloud>& shapes,
                                    const RangeConfig& range, const NetConfig& ncfg,
                                    const TrainConfig& tcfg, Rng& rng) {
    if (shapes.empty()) throw ValidationError("draw_training_sample: no shapes");
    PointCloud shape = shapes[rng.below(shapes.size())];
    if (tcfg.source_pose_jitter > 0.0) {
        Rng pose_rng(rng.next_u64());
        shape = apply_transform(
            shape, RigidTransform{sample_rotation_uniform_angle(pose_rng, tcfg.source_pose_jitter),
                                  Vec3{0, 0, 0}});
    }

    Rng trng(rng.next_u64());
    RigidTransform gt;
    if (tcfg.rotation_method == SampleMethod::naive_euler)
        gt.rotation = sample_rotation_naive(trng, range.max_angle);
    else
        gt.rotation = tcfg.uniform_residual_angle
                          ? sample_rotation_uniform_angle(trng, range.max_angle)
                          : sample_rotation_haar(trng, range.max_angle);
    gt.translation = sample_translation(trng, range.max_translation);

    PerturbationConfig pcfg = tcfg.perturbation;
    pcfg.n_points = ncfg.n_points;
    pcfg.seed = rng.next_u64();

    const CloudPair pair = make_pair(shape, gt, pcfg);
    const std::vector<ActionSpec>& actions = default_action_set();
    const std::vector<double> raw =
        reward_vector_se3(actions, residual(pair.gt, AccumulatedTransform::identity()));

    TrainingSample sample;
    sample.source = pair.source;
    sample.target = pair.target;
    sample.reward_target = normalize_rewards_per_group(actions, raw, tcfg.target_grouping);
    return sample;
}

TrainResult train(const std::vector<PointCloud>& shapes, const TrainConfig& tcfg,
                  const NetConfig& ncfg) {
    tcfg.validate();
    ncfg.validate();
    if (shapes.empty()) throw ValidationError("train: no shapes");

    TrainResult result{NetworkParameters::init(ncfg, tcfg.seed), {}};
    Rng master(tcfg.seed);
    Rng sample_rng = master.derive(1);
    Rng val_rng = master.derive(2);

    std::vector<TrainingSample> val_set;
    val_set.reserve(tcfg.validation_pairs);
    for (std::size_t i = 0; i < tcfg.validation_pairs; ++i)
        val_set.push_back(draw_training_sample(shapes, tcfg.full_range, ncfg, tcfg, val_rng));

    result.history.reserve(tcfg.total_epochs);
    std::vector<TrainingSample> batch;
    for (std::size_t epoch = 0; epoch < tcfg.total_epochs; ++epoch) {
        const RangeConfig& epoch_range =
            tcfg.curriculum_mode == CurriculumMode::staged &&
                    epoch < tcfg.curriculum_boundary_epoch
                ? tcfg.small_range
                : tcfg.full_range;
        const double lr = learning_rate(tcfg, epoch);

        double loss_sum = 0.0;
        std::size_t drawn = 0;
        while (drawn < tcfg.samples_per_epoch) {
            const std::size_t take =
                std::min(tcfg.batch_size, tcfg.samples_per_epoch - drawn);
            batch.clear();
            for (std::size_t i = 0; i < take; ++i) {
                // mixed flips per sample so one batch can span both ranges.
                const RangeConfig& range =
                    tcfg.curriculum_mode == CurriculumMode::mixed &&
                            sample_rng.uniform(0.0, 1.0) < 0.5
                        ? tcfg.small_range
                        : epoch_range;
                batch.push_back(
                    draw_training_sample(shapes, range, ncfg, tcfg, sample_rng));
            }
            const BackwardResult back =
                net_backward(result.params, batch, tcfg.weight_decay);
            sgd_step(result.params, back.gradients, lr);
            loss_sum += back.loss * static_cast<double>(take);
            drawn += take;
        }

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(tcfg.samples_per_epoch);
        double val_sum = 0.0;
        for (const TrainingSample& s : val_set) {
            const std::vector<double> h = net_forward(result.params, s.source, s.target);
            val_sum += net_loss(h, s.reward_target, result.params, 0.0);
        }
        stats.val_loss = val_set.empty() ? 0.0 : val_sum / static_cast<double>(val_set.size());
        stats.lr = lr;
        result.history.push_back(stats);
    }
    return result;
}

void save_weights(const std::string& path, const NetworkParameters& params,
                  const std::string& provenance) {
    nlohmann::json header{{"net_config", config_json(params.config())},
                          {"action_set", action_set_to_text(default_action_set())},
                          {"param_count", params.size()}};
    if (!provenance.empty()) header["provenance"] = provenance;
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_weights: cannot open " + path);
    out.write(kMagic, 8);
    put_u32(out, kVersion);
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (double v : params.flat()) put_f64(out, v);
    if (!out) throw DataError("save_weights: write failed for " + path);
}

NetworkParameters load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_weights: cannot open " + path);

    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("load_weights: bad magic in " + path);
    const std::uint32_t version = get_u32(in);
    if (version != kVersion)
        throw DataError("load_weights: unsupported version " + std::to_string(version));
    const std::uint64_t json_len = get_u64(in);
    if (!in || json_len == 0 || json_len > (1u << 20))
        throw DataError("load_weights: corrupt header length");
    std::string text(json_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(json_len));
    if (!in) throw DataError("load_weights: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("load_weights: header parse: ") + e.what());
    }
    const NetConfig cfg = config_from_json(header.at("net_config"));
    if (header.at("action_set").get<std::string>() !=
        action_set_to_text(default_action_set()))
        throw DataError("load_weights: action set mismatch");

    NetworkParameters params(cfg);
    if (header.at("param_count").get<std::size_t>() != params.size())
        throw DataError("load_weights: parameter count mismatch");
    for (double& v : params.flat()) {
        v = get_f64(in);
        if (!in) throw DataError("load_weights: truncated parameters");
    }
    in.peek();
    if (!in.eof()) throw DataError("load_weights: trailing bytes");
    return params;
}

std::string net_config_to_json(const NetConfig& cfg) { return config_json(cfg).dump(2); }

NetConfig net_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("net config json: ") + e.what());
    }
    return config_from_json(j);
}

} // namespace pcreg
