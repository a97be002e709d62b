#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include "pcreg/actions.hpp"
#include "pcreg/cloud.hpp"
#include "pcreg/errors.hpp"
#include "pcreg/rewardnet.hpp"
#include "pcreg/rng.hpp"

using namespace pcreg;

namespace {

NetConfig tiny_config() {
    NetConfig cfg;
    cfg.n_points = 16;
    cfg.knn_k = 4;
    cfg.edgeconv_widths = {8, 8};
    cfg.embed_dim = 8;
    cfg.attn_heads = 2;
    cfg.shared_mlp_widths = {8};
    cfg.head_mlp_widths = {8};
    return cfg;
}

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    PointCloud c;
    c.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        c.points.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                            rng.uniform(-1.0, 1.0)});
    return c;
}

TrainingSample random_sample(const NetConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    PointCloud shape = synth_shape(ShapeKind::sphere, 4 * cfg.n_points, rng);
    TransformSampleConfig scfg;
    scfg.max_angle = deg_to_rad(40.0);
    scfg.max_translation = 0.3;
    scfg.seed = rng.next_u64();
    PerturbationConfig pcfg;
    pcfg.n_points = cfg.n_points;
    pcfg.seed = rng.next_u64();
    const CloudPair pair = make_pair(shape, scfg, pcfg);
    const auto& actions = default_action_set();
    TrainingSample s;
    s.source = pair.source;
    s.target = pair.target;
    s.reward_target = normalize_rewards_per_group(
        actions, reward_vector_se3(actions, residual(pair.gt, AccumulatedTransform::identity())),
        RewardGrouping::by_magnitude);
    return s;
}

} // namespace

TEST_CASE("knn_graph on three collinear points") {
    const std::vector<double> emb = {0.0, 1.0, 3.0};
    const auto edges = knn_graph(emb, 3, 1, 1);
    REQUIRE(edges.size() == 3);
    CHECK(edges[0] == 1);
    CHECK(edges[1] == 0);
    CHECK(edges[2] == 1);
}

TEST_CASE("knn_graph equidistant tie goes to the lower index") {
    // Node 0 sits exactly between nodes 1 and 2.
    const std::vector<double> emb = {0.0, 1.0, -1.0, 3.0};
    const auto edges = knn_graph(emb, 4, 1, 2);
    CHECK(edges[0] == 1); // tie between 1 and 2
    CHECK(edges[1] == 2);
}

TEST_CASE("knn_graph matches a full-sort oracle") {
    const std::size_t n = 32, dim = 3, k = 5;
    Rng rng(77);
    std::vector<double> emb(n * dim);
    for (double& v : emb) v = rng.uniform(-1.0, 1.0);

    const auto edges = knn_graph(emb, n, dim, k);
    REQUIRE(edges.size() == n * k);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (std::size_t m = 0; m < dim; ++m) {
                const double d = emb[i * dim + m] - emb[j * dim + m];
                d2 += d * d;
            }
            all.push_back({d2, j});
        }
        std::sort(all.begin(), all.end());
        for (std::size_t s = 0; s < k; ++s) CHECK(edges[i * k + s] == all[s].second);
    }
}

TEST_CASE("knn_graph rejects bad arguments") {
    const std::vector<double> emb = {0.0, 1.0, 2.0};
    CHECK_THROWS_AS((void)knn_graph(emb, 3, 1, 3), ValidationError); // k >= n
    CHECK_THROWS_AS((void)knn_graph(emb, 3, 1, 0), ValidationError);
    CHECK_THROWS_AS((void)knn_graph(emb, 2, 2, 1), ValidationError); // size mismatch
    CHECK_THROWS_AS((void)knn_graph({}, 0, 3, 1), ValidationError);
}

TEST_CASE("edgeconv with zero weights is zero") {
    const std::size_t n = 5, c_in = 3, c_out = 4, k = 2;
    std::vector<double> x(n * c_in, 1.5);
    std::vector<double> w(c_out * c_in, 0.0), v(c_out * c_in, 0.0);
    std::vector<std::size_t> edges(n * k, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < k; ++s) edges[i * k + s] = (i + s + 1) % n;
    const auto out = edgeconv_forward(x, n, c_in, edges, k, w.data(), v.data(), c_out);
    for (double o : out) CHECK(o == 0.0);
}

TEST_CASE("edgeconv 1x1 with w=0 v=1 takes the neighborhood max") {
    // out[i] = ReLU(max over neighbors of x_j).
    const std::vector<double> x = {-1.0, 2.0, 0.5, -3.0};
    const std::vector<std::size_t> edges = {1, 2, /**/ 0, 3, /**/ 3, 1, /**/ 2, 0};
    const double w = 0.0, v = 1.0;
    const auto out = edgeconv_forward(x, 4, 1, edges, 2, &w, &v, 1);
    CHECK(out[0] == 2.0);  // max(x1, x2) = 2
    CHECK(out[1] == 0.0);  // max(x0, x3) = -1 -> ReLU 0
    CHECK(out[2] == 2.0);  // max(x3, x1) = 2
    CHECK(out[3] == 0.5);  // max(x2, x0) = 0.5
}

TEST_CASE("edgeconv matches a naive loop") {
    const std::size_t n = 12, c_in = 5, c_out = 7, k = 3;
    Rng rng(31);
    std::vector<double> x(n * c_in), w(c_out * c_in), v(c_out * c_in);
    for (double& a : x) a = rng.normal();
    for (double& a : w) a = rng.normal();
    for (double& a : v) a = rng.normal();
    std::vector<std::size_t> edges(n * k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < k; ++s) edges[i * k + s] = rng.below(n);

    const auto out = edgeconv_forward(x, n, c_in, edges, k, w.data(), v.data(), c_out);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t m = 0; m < c_out; ++m) {
            double self = 0.0;
            for (std::size_t c = 0; c < c_in; ++c) self += w[m * c_in + c] * x[i * c_in + c];
            double best = -1e300;
            for (std::size_t s = 0; s < k; ++s) {
                const std::size_t j = edges[i * k + s];
                double nb = 0.0;
                for (std::size_t c = 0; c < c_in; ++c) nb += v[m * c_in + c] * x[j * c_in + c];
                best = std::max(best, self + nb);
            }
            CHECK(out[i * c_out + m] == doctest::Approx(std::max(best, 0.0)).epsilon(1e-12));
        }
}

TEST_CASE("edgeconv rejects inconsistent shapes") {
    std::vector<double> x(6, 0.0), w(2, 0.0), v(2, 0.0);
    CHECK_THROWS_AS((void)edgeconv_forward(x, 3, 3, {0, 1}, 1, w.data(), v.data(), 1),
                    ValidationError); // x size
    CHECK_THROWS_AS((void)edgeconv_forward(x, 3, 2, {0, 1, 2, 9}, 2, w.data(), v.data(), 1),
                    ValidationError); // edge range (and count 4 != 3*2 caught first)
}

TEST_CASE("cross attention with zero output projection is the identity") {
    NetConfig cfg = tiny_config();
    NetworkParameters params = NetworkParameters::init(cfg, 5);
    double* wo = params.block("attn.wo");
    std::fill(wo, wo + params.block_info("attn.wo").count(), 0.0);

    const std::size_t n_src = 9, n_tgt = 6, K = cfg.embed_dim;
    Rng rng(8);
    std::vector<double> f_src(n_src * K), f_tgt(n_tgt * K);
    for (double& v : f_src) v = rng.normal();
    for (double& v : f_tgt) v = rng.normal();

    const auto [phi_src, phi_tgt] = cross_attention(params, f_src, n_src, f_tgt, n_tgt);
    REQUIRE(phi_src.size() == f_src.size());
    REQUIRE(phi_tgt.size() == f_tgt.size());
    CHECK(std::memcmp(phi_src.data(), f_src.data(), f_src.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(phi_tgt.data(), f_tgt.data(), f_tgt.size() * sizeof(double)) == 0);
}

TEST_CASE("cross attention softmax rows are distributions") {
    NetConfig cfg = tiny_config();
    NetworkParameters params = NetworkParameters::init(cfg, 6);
    const std::size_t n_src = 7, n_tgt = 11, K = cfg.embed_dim;
    Rng rng(9);
    std::vector<double> f_src(n_src * K), f_tgt(n_tgt * K);
    for (double& v : f_src) v = rng.normal();
    for (double& v : f_tgt) v = rng.normal();

    std::vector<double> p_st, p_ts;
    (void)cross_attention(params, f_src, n_src, f_tgt, n_tgt, &p_st, &p_ts);
    REQUIRE(p_st.size() == cfg.attn_heads * n_src * n_tgt);
    REQUIRE(p_ts.size() == cfg.attn_heads * n_tgt * n_src);
    for (std::size_t r = 0; r < cfg.attn_heads * n_src; ++r) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n_tgt; ++j) {
            const double p = p_st[r * n_tgt + j];
            CHECK(p >= 0.0);
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
    for (std::size_t r = 0; r < cfg.attn_heads * n_tgt; ++r) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n_src; ++j) sum += p_ts[r * n_src + j];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("cross attention shares one weight set across directions") {
    NetConfig cfg = tiny_config();
    NetworkParameters params = NetworkParameters::init(cfg, 12);
    const std::size_t n = 8, K = cfg.embed_dim;
    Rng rng(13);
    std::vector<double> f(n * K);
    for (double& v : f) v = rng.normal();
    // Identical inputs on both sides: both directions run the same arithmetic.
    const auto [a, b] = cross_attention(params, f, n, f, n);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("parameter registry layout and init") {
    NetConfig cfg = tiny_config();
    NetworkParameters zeros(cfg);
    for (double v : zeros.flat()) CHECK(v == 0.0);
    CHECK(zeros.size() == net_param_count(cfg));

    // Blocks tile the flat vector contiguously in declaration order.
    std::size_t offset = 0;
    for (const ParamBlock& b : zeros.blocks()) {
        CHECK(b.offset == offset);
        offset += b.count();
    }
    CHECK(offset == zeros.size());
    CHECK(zeros.blocks().front().name == "edgeconv0.w");
    CHECK(zeros.block_info("attn.wq").rows == cfg.embed_dim);
    CHECK(zeros.block_info("attn.ffn.w1").rows == 2 * cfg.embed_dim);
    CHECK(zeros.block_info("rot_out.w").rows == 12);
    CHECK(zeros.block_info("trans_out.b").rows == 12);
    CHECK_THROWS_AS((void)zeros.block_info("nope"), ValidationError);

    NetworkParameters a = NetworkParameters::init(cfg, 42);
    NetworkParameters b = NetworkParameters::init(cfg, 42);
    CHECK(std::memcmp(a.flat().data(), b.flat().data(), a.size() * sizeof(double)) == 0);
    NetworkParameters c = NetworkParameters::init(cfg, 43);
    CHECK(std::memcmp(a.flat().data(), c.flat().data(), a.size() * sizeof(double)) != 0);

    for (const ParamBlock& blk : a.blocks()) {
        const double* p = a.flat().data() + blk.offset;
        if (blk.cols == 1) {
            const double expect = blk.name == "attn.ln.gamma" ? 1.0 : 0.0;
            for (std::size_t i = 0; i < blk.count(); ++i) CHECK(p[i] == expect);
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(blk.cols));
            for (std::size_t i = 0; i < blk.count(); ++i) {
                CHECK(p[i] >= -bound);
                CHECK(p[i] <= bound);
            }
        }
    }
}

TEST_CASE("net config validation") {
    NetConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());
    NetConfig bad = cfg;
    bad.n_actions = 12;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.edgeconv_widths.back() = 7; // != embed_dim
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.attn_heads = 3; // 8 % 3 != 0
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.n_points = bad.knn_k;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.edgeconv_widths.clear();
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("net_forward emits 24 rewards deterministically") {
    NetConfig cfg = tiny_config();
    NetworkParameters params = NetworkParameters::init(cfg, 3);
    const PointCloud src = random_cloud(16, 100);
    const PointCloud tgt = random_cloud(13, 101); // unequal sizes are fine

    const auto r1 = net_forward(params, src, tgt);
    const auto r2 = net_forward(params, src, tgt);
    REQUIRE(r1.size() == 24);
    CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);

    PointCloud small;
    small.points.assign(4, {0, 0, 0}); // below knn_k + 1
    CHECK_THROWS_AS((void)net_forward(params, small, tgt), ValidationError);
}

TEST_CASE("net_forward is invariant to point order") {
    NetConfig cfg = tiny_config();
    NetworkParameters params = NetworkParameters::init(cfg, 21);
    const PointCloud src = random_cloud(24, 200);
    const PointCloud tgt = random_cloud(20, 201);
    const auto base = net_forward(params, src, tgt);

    Rng rng(7);
    PointCloud shuffled = src;
    for (std::size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled.points[i - 1], shuffled.points[rng.below(i)]);
    const auto permuted = net_forward(params, shuffled, tgt);
    for (std::size_t i = 0; i < 24; ++i)
        CHECK(std::abs(base[i] - permuted[i]) < 1e-6);
}

TEST_CASE("net_loss arithmetic") {
    NetConfig cfg = tiny_config();
    NetworkParameters params(cfg); // zeros: decay term vanishes
    std::vector<double> h(24, 0.5), g(24, 0.5);
    CHECK(net_loss(h, g, params, 0.0) == 0.0);
    CHECK(net_loss(h, g, params, 123.0) == 0.0);

    g[7] += 1.0; // single unit residual
    CHECK(net_loss(h, g, params, 0.0) == doctest::Approx(1.0 / 24.0).epsilon(1e-15));

    NetworkParameters two(cfg);
    two.flat()[0] = 2.0;
    two.flat()[5] = -1.0;
    g[7] -= 1.0;
    CHECK(net_loss(h, g, two, 0.1) == doctest::Approx(0.5).epsilon(1e-15)); // 0.1 * (4 + 1)

    CHECK_THROWS_AS((void)net_loss(std::vector<double>(23, 0.0), g, params, 0.0),
                    ValidationError);
}

TEST_CASE("weight decay adds exactly 2 lambda theta to the gradient") {
    NetConfig cfg = tiny_config();
    NetworkParameters params = NetworkParameters::init(cfg, 9);
    const std::vector<TrainingSample> batch = {random_sample(cfg, 500)};

    const double lambda = 0.01;
    const BackwardResult plain = net_backward(params, batch, 0.0);
    const BackwardResult decayed = net_backward(params, batch, lambda);
    REQUIRE(plain.gradients.size() == params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        CHECK(decayed.gradients[i] - plain.gradients[i] ==
              doctest::Approx(2.0 * lambda * params.flat()[i]).epsilon(1e-9));

    double norm2 = 0.0;
    for (double p : params.flat()) norm2 += p * p;
    CHECK(decayed.loss - plain.loss == doctest::Approx(lambda * norm2).epsilon(1e-12));
}

TEST_CASE("batch gradient is the mean of per-sample gradients") {
    NetConfig cfg = tiny_config();
    NetworkParameters params = NetworkParameters::init(cfg, 14);
    const TrainingSample s1 = random_sample(cfg, 600);
    const TrainingSample s2 = random_sample(cfg, 601);

    const BackwardResult b1 = net_backward(params, {s1}, 0.0);
    const BackwardResult b2 = net_backward(params, {s2}, 0.0);
    const BackwardResult both = net_backward(params, {s1, s2}, 0.0);
    CHECK(both.loss == doctest::Approx(0.5 * (b1.loss + b2.loss)).epsilon(1e-12));
    for (std::size_t i = 0; i < params.size(); ++i)
        CHECK(both.gradients[i] ==
              doctest::Approx(0.5 * (b1.gradients[i] + b2.gradients[i])).epsilon(1e-9));

    CHECK_THROWS_AS((void)net_backward(params, {}, 0.0), ValidationError);
}

TEST_CASE("backward loss equals forward loss") {
    NetConfig cfg = tiny_config();
    NetworkParameters params = NetworkParameters::init(cfg, 15);
    const TrainingSample s = random_sample(cfg, 700);
    const BackwardResult back = net_backward(params, {s}, 1e-4);
    const std::vector<double> h = net_forward(params, s.source, s.target);
    CHECK(back.loss == doctest::Approx(net_loss(h, s.reward_target, params, 1e-4))
                            .epsilon(1e-12));
}

TEST_CASE("finite differences confirm every parameter block") {
    NetConfig cfg = tiny_config();
    NetworkParameters params = NetworkParameters::init(cfg, 11);
    const std::vector<TrainingSample> batch = {random_sample(cfg, 800),
                                               random_sample(cfg, 801)};
    const GradCheckReport report = gradient_check(params, batch, 1e-4);
    INFO("worst block: ", report.worst_block, " err ", report.max_rel_err);
    CHECK(report.max_rel_err < 1e-4);
    CHECK(report.per_block.size() == params.blocks().size());
}

TEST_CASE("finite differences pass with difference fusion") {
    NetConfig cfg = tiny_config();
    cfg.fuse_difference = true;
    NetworkParameters params = NetworkParameters::init(cfg, 16);
    const std::vector<TrainingSample> batch = {random_sample(cfg, 900)};
    const GradCheckReport report = gradient_check(params, batch, 1e-4);
    INFO("worst block: ", report.worst_block, " err ", report.max_rel_err);
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("network reward source scores the moved source") {
    NetConfig cfg = tiny_config();
    NetworkParameters params = NetworkParameters::init(cfg, 19);
    const TrainingSample s = random_sample(cfg, 1000);
    CloudPair pair;
    pair.source = s.source;
    pair.target = s.target;

    NetworkRewardSource src(params);
    CHECK(std::string(src.name()) == "network");
    const auto at_identity = src.rewards(pair, AccumulatedTransform::identity());
    const auto direct = net_forward(params, pair.source, pair.target);
    REQUIRE(at_identity.size() == 24);
    CHECK(std::memcmp(at_identity.data(), direct.data(), 24 * sizeof(double)) == 0);

    AccumulatedTransform acc = AccumulatedTransform::identity();
    acc = apply_action(acc, default_action_set()[1]); // one large rotation step
    const auto moved = src.rewards(pair, acc);
    const auto expected =
        net_forward(params, estimate_to_cloud(pair, acc), pair.target);
    CHECK(std::memcmp(moved.data(), expected.data(), 24 * sizeof(double)) == 0);
}
