#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "logsol/experiments.hpp"
#include "logsol/io.hpp"

using namespace logsol;
namespace fs = std::filesystem;

namespace {

const ShootContext& cubic() {
    static const ShootContext ctx = make_context(3.0, 1);
    return ctx;
}

ShootConfig cheap_config(double s_in, double s0) {
    ShootConfig c;
    c.s_in = s_in;
    c.s0 = s0;
    c.N = 1024;
    c.L = 48;
    c.order = 2;
    return c;
}

// The default configuration shot at zeta_sharp = 0, shared by the trajectory property tests.
const RunRecord& deep_run() {
    static const RunRecord r = backward_shoot(ShootConfig{}, 0.0, cubic());
    return r;
}

fs::path scratch_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("logsol_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<DiagnosticSample> log_samples(double a, double b, double t0, double t1, int n) {
    std::vector<DiagnosticSample> out;
    for (int i = 0; i < n; ++i) {
        DiagnosticSample ds;
        ds.s = t0 * std::pow(t1 / t0, static_cast<double>(i) / (n - 1));
        ds.params.z = {a * std::log(ds.s) + b, 0.0};
        out.push_back(ds);
    }
    return out;
}

}  // namespace

TEST(ShootSetup, FinalParametersMatchZeta) {
    ShootConfig cfg;
    const double c = cubic().sc.c;
    for (double zs : {-1.0, -0.3, 0.0, 0.5, 1.0}) {
        BubbleParams q = initial_params(cfg, zs, c);
        const double zeta_in = cfg.s_in + zs * cfg.s_in / std::sqrt(std::log(cfg.s_in));
        EXPECT_NEAR(zeta_of(q.z, c, 1), zeta_in, 1e-9 * zeta_in);
        EXPECT_NEAR(q.v[0], 1.0 / zeta_in, 1e-15);
        EXPECT_EQ(q.lambda, 1.0);
        EXPECT_EQ(q.gamma, 0.0);
        EXPECT_NEAR(xi_of(zeta_in, cfg.s_in), zs * zs, 1e-12);
    }
    EXPECT_NEAR(separation_for_zeta(zeta_of({11.0, 0.0}, c, 2), c, 2), 11.0, 1e-12);
}

TEST(ShootSetup, ConfigValidation) {
    ShootConfig c;
    c.s0 = 400;
    EXPECT_THROW(validate(c), InvalidConfig);
    c = ShootConfig{};
    c.C_star = 0.5;
    EXPECT_THROW(validate(c), InvalidConfig);
    c = ShootConfig{};
    c.zeta_hi = 1.5;
    EXPECT_THROW(validate(c), InvalidConfig);
    c = ShootConfig{};
    c.order = 3;
    EXPECT_THROW(validate(c), InvalidConfig);
    EXPECT_NO_THROW(validate(ShootConfig{}));
}

TEST(BackwardShoot, ErrorVanishesAtFinalTime) {
    const auto& first = deep_run().samples.front();
    EXPECT_EQ(first.s, 300.0);
    EXPECT_LE(first.eps_h1, 1e-10);
    EXPECT_NEAR(first.xi, 0.0, 1e-12);
}

TEST(BackwardShoot, EndpointsExitWithOppositeSigns) {
    ShootConfig cfg;
    RunRecord hi = backward_shoot(cfg, 1.0, cubic());
    RunRecord lo = backward_shoot(cfg, -1.0, cubic());
    EXPECT_EQ(hi.exit, Exit::exited_zeta_high);
    EXPECT_EQ(hi.phi, 1);
    EXPECT_EQ(lo.exit, Exit::exited_zeta_low);
    EXPECT_EQ(lo.phi, -1);
    for (const RunRecord* r : {&hi, &lo}) {
        ASSERT_GE(r->samples.size(), 2u);
        const auto& a = r->samples[r->samples.size() - 2];
        const auto& b = r->samples.back();
        EXPECT_GT(b.xi, 1.0);
        // xi decreasing in forward s at the exit.
        EXPECT_LT((b.xi - a.xi) / (b.s - a.s), 0.0);
        EXPECT_EQ(r->s_reached, b.s);
    }
}

TEST(BackwardShoot, CentralShotReachesWindowInsideBootstrap) {
    const RunRecord& r = deep_run();
    ASSERT_EQ(r.exit, Exit::reached_s0) << r.note;
    EXPECT_EQ(r.phi, 0);
    EXPECT_NEAR(r.s_reached, 30.0, 1e-9);
    for (const auto& s : r.samples) {
        ASSERT_LE(s.eps_s, r.config.C_star) << "s = " << s.s;
        ASSERT_LE(s.xi, 1.0) << "s = " << s.s;
        ASSERT_GT(s.zeta, 0.0);
    }
    for (std::size_t i = 1; i < r.samples.size(); ++i) ASSERT_LT(r.samples[i].s, r.samples[i - 1].s);
}

TEST(BackwardShoot, ConservationAlongRun) {
    const RunRecord& r = deep_run();
    const auto& a = r.samples.front();
    for (const auto& s : r.samples) {
        ASSERT_NEAR(s.mass, a.mass, 1e-10 * a.mass) << "s = " << s.s;
        ASSERT_NEAR(s.momentum[0], a.momentum[0], 1e-10) << "s = " << s.s;
    }
}

TEST(BackwardShoot, TranslationProjectionStaysBounded) {
    const RunRecord& r = deep_run();
    double worst = 0;
    for (const auto& s : r.samples) worst = std::max(worst, s.proj_igrad);
    RecordProperty("max_proj_igrad_s2", std::to_string(worst));
    EXPECT_LE(worst, 1.0);
}

TEST(BackwardShoot, EnergyFunctionalAlmostConserved) {
    const RunRecord& r = deep_run();
    const auto& smp = r.samples;
    double integral = 0, K = 0;
    for (std::size_t i = 1; i < smp.size(); ++i) {
        const double f0 = smp[i - 1].eps_h1 / (smp[i - 1].s * smp[i - 1].s);
        const double f1 = smp[i].eps_h1 / (smp[i].s * smp[i].s);
        integral += 0.5 * (f0 + f1) * (smp[i - 1].s - smp[i].s);
        if (integral > 0) K = std::max(K, std::abs(smp[i].W - smp.front().W) / integral);
    }
    RecordProperty("W_ratio_K", std::to_string(K));
    EXPECT_TRUE(std::isfinite(K));
    EXPECT_LE(K, 2.0);
}

TEST(VerifyRegime, CentralShotHasLogarithmicSeparation) {
    RegimeReport rep = verify_regime(deep_run(), cubic().sc.c);
    EXPECT_NEAR(rep.slope, 2.0, 0.1);
    EXPECT_LE(rep.tube, 1.0);
    EXPECT_LE(rep.sup_eps, deep_run().config.C_star);
}

TEST(VerifyRegime, ExactReducedOrbit) {
    const ReducedModel m{cubic().gs, cubic().sc};
    ReducedState st;
    st.s = 10;
    st.z = {2 * std::log(10.0) + std::log(16.0), 0.0};
    st.v = {0.1, 0.0};
    ReducedOptions opt;
    for (double s = 12; s <= 1e4; s *= 1.2) opt.outputs.push_back(s);
    auto smp = samples_from_reduced(integrate_reduced(st, opt.outputs.back(), m, opt), cubic().sc.c, 1);
    RegimeReport rep = verify_regime(smp, cubic().sc.c, 1);
    EXPECT_NEAR(rep.slope, 2.0, 0.01);
    EXPECT_NEAR(rep.C, -std::log(16.0), 0.01);
    EXPECT_LE(rep.residual, 1e-6);
    EXPECT_LE(rep.tube, 1e-4);
    EXPECT_NEAR(rep.sup_v, 1.0, 1e-6);
    EXPECT_NEAR(rep.sup_lambda, 0.0, 1e-15);
}

TEST(VerifyRegime, TubeAroundModelSeparation) {
    const double c = cubic().sc.c;
    for (double s : {30.0, 100.0, 300.0}) {
        const double z = std::log(c * s * s);
        for (double k : {-0.9, 0.9}) {
            // ratio = e^{dz} = 1 + k / sqrt(log s)
            const double zz = z + std::log(1.0 + k / std::sqrt(std::log(s)));
            std::vector<DiagnosticSample> smp = log_samples(2.0, std::log(c), s, 10 * s, 6);
            smp[0].params.z = {zz, 0.0};
            RegimeReport rep = verify_regime(smp, c, 1);
            EXPECT_NEAR(rep.tube, 0.9, 1e-9);
        }
    }
}

TEST(VerifyRegime, ToyLogarithmHasUnitSlope) {
    auto traj = toy_double_pole(0.0, 1.0, 100.0);
    std::vector<DiagnosticSample> smp;
    for (const auto& x : traj) {
        if (x.t < 2.0) continue;
        DiagnosticSample ds;
        ds.s = x.t;
        ds.params.z = {x.z, 0.0};
        smp.push_back(ds);
    }
    std::sort(smp.begin(), smp.end(), [](const auto& a, const auto& b) { return a.s < b.s; });
    EXPECT_NEAR(verify_regime(smp, 1.0, 1).slope, 1.0, 1e-6);
}

TEST(VerifyRegime, ShortWindowsAreRejected) {
    EXPECT_THROW(verify_regime(log_samples(2, 0, 10, 100, 4), 16, 1), WindowTooShort);
    EXPECT_THROW(verify_regime(log_samples(2, 0, 10, 12, 10), 16, 1), WindowTooShort);
    RunRecord r;
    r.exit = Exit::exited_eps;
    r.samples = log_samples(2, 0, 10, 100, 10);
    EXPECT_THROW(verify_regime(r, 16), WindowTooShort);
}

TEST(VerifyRegime, LabTimeIsIdentityAtUnitScale) {
    auto smp = log_samples(2, 0, 300, 30, 20);
    for (auto& s : smp) s.params.lambda = 1.0;
    auto t = lab_times(smp);
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(t[i], smp[i].s, 1e-12);
}

TEST(Bisection, BracketHalvesAndEndpointsDeepen) {
    ShootConfig cfg = cheap_config(300, 30);
    cfg.zeta_lo = -0.7;
    cfg.zeta_hi = 1.0;
    cfg.max_bisections = 12;
    BisectResult res = bisect_zeta(cfg, cubic());
    EXPECT_EQ(res.lo_record.phi, -1);
    EXPECT_EQ(res.hi_record.phi, 1);
    ASSERT_FALSE(res.steps.empty());
    double lo_depth = res.lo_record.s_reached, hi_depth = res.hi_record.s_reached;
    for (std::size_t k = 0; k < res.steps.size(); ++k) {
        const auto& st = res.steps[k];
        EXPECT_NEAR(st.width, 1.7 * std::pow(2.0, -static_cast<double>(k + 1)), 1e-15);
        if (st.phi == -1) {
            EXPECT_LE(st.s_reached, lo_depth) << "step " << k;
            lo_depth = st.s_reached;
        } else if (st.phi == 1) {
            EXPECT_LE(st.s_reached, hi_depth) << "step " << k;
            hi_depth = st.s_reached;
        }
    }
    EXPECT_EQ(res.record.exit, Exit::reached_s0);
    EXPECT_EQ(res.zeta_sharp_star, res.steps.back().zeta_sharp);
    EXPECT_LE(res.record.s_reached, std::min(lo_depth, hi_depth));
}

TEST(Bisection, UnitBracketWidths) {
    ShootConfig cfg = cheap_config(100, 20);
    BisectResult res = bisect_zeta(cfg, cubic());
    ASSERT_FALSE(res.steps.empty());
    for (std::size_t k = 0; k < res.steps.size(); ++k)
        EXPECT_DOUBLE_EQ(res.steps[k].width, std::pow(2.0, 1.0 - static_cast<double>(k + 1)));
    EXPECT_EQ(res.record.exit, Exit::reached_s0);
}

TEST(Bisection, SameSignEndpointsAreRejected) {
    ShootConfig cfg = cheap_config(100, 20);
    cfg.zeta_lo = 0.6;
    cfg.zeta_hi = 1.0;
    EXPECT_THROW(bisect_zeta(cfg, cubic()), NoSignChange);
}

TEST(Persistence, ConfigJsonRoundTrip) {
    ShootConfig c = cheap_config(150, 15);
    c.zeta_sharp = 0.125;
    c.force = ForceMode::asymptotic;
    c.zeta_lo = -0.5;
    ShootConfig back = shoot_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(config_hash(back), config_hash(c));
    c.dt *= 0.5;
    EXPECT_NE(config_hash(back), config_hash(c));

    fs::path dir = scratch_dir("config");
    std::ofstream(dir / "cfg.json") << R"({"s_in": 120, "s0": 12, "grid": {"d": 1, "N": 512, "L": 40}, "force": "full"})";
    ShootConfig f = load_shoot_config((dir / "cfg.json").string());
    EXPECT_EQ(f.N, 512);
    EXPECT_EQ(f.L, 40.0);
    EXPECT_EQ(f.s_in, 120.0);
    EXPECT_EQ(f.force, ForceMode::quadrature);
    std::ofstream(dir / "bad.json") << R"({"s_in": 10, "s0": 12})";
    EXPECT_THROW(load_shoot_config((dir / "bad.json").string()), InvalidConfig);
    EXPECT_THROW(load_shoot_config((dir / "missing.json").string()), IoFailure);
    fs::remove_all(dir);
}

TEST(Persistence, RecordJsonAndCsv) {
    fs::path dir = scratch_dir("record");
    RunRecord r = backward_shoot(cheap_config(40, 30), 0.0, cubic());
    ASSERT_EQ(r.exit, Exit::reached_s0);
    Registry reg((dir / "reg.jsonl").string());
    ASSERT_TRUE(reg.append(r));
    RunRecord back = load_record((dir / "reg.jsonl").string());
    EXPECT_EQ(to_json(back).dump(), to_json(r).dump());

    write_trajectory_csv((dir / "traj.csv").string(), r);
    std::ifstream f(dir / "traj.csv");
    std::string header;
    std::getline(f, header);
    EXPECT_EQ(header, "s,t,lambda,z1,gamma,v1,eps_h1,zeta,xi,W");
    std::size_t rows = 0;
    for (std::string line; std::getline(f, line);) ++rows;
    EXPECT_EQ(rows, r.samples.size());
    fs::remove_all(dir);
}

TEST(Persistence, SnapshotRoundTrip) {
    fs::path dir = scratch_dir("snap");
    for (int d : {1, 2}) {
        Grid g = make_grid(d, d == 1 ? 256 : 64, 12);
        ComplexField u = ComplexField::sample(g, [](const Vec& y) { return cplx(std::exp(-dot(y, y)), y[0] - 0.5 * y[1]); });
        write_snapshot((dir / "u.bin").string(), u, 12.5);
        Snapshot s = read_snapshot((dir / "u.bin").string());
        EXPECT_EQ(s.t, 12.5);
        EXPECT_EQ(s.field.grid.d(), d);
        EXPECT_EQ(s.field.grid.N(), g.N());
        EXPECT_EQ(s.field.grid.L(), 12.0);
        EXPECT_EQ(s.field.values, u.values);
        EXPECT_EQ(fs::file_size(dir / "u.bin"), 24 + 16 * g.size());
    }
    std::ofstream(dir / "short.bin", std::ios::binary) << "abc";
    EXPECT_THROW(read_snapshot((dir / "short.bin").string()), IoFailure);
    fs::remove_all(dir);
}

TEST(Sweep, EmptyListLeavesRegistryUntouched) {
    fs::path dir = scratch_dir("sweep_empty");
    auto out = run_sweep({}, (dir / "reg.jsonl").string());
    EXPECT_TRUE(out.empty());
    EXPECT_FALSE(fs::exists(dir / "reg.jsonl") && fs::file_size(dir / "reg.jsonl") > 0);
    fs::remove_all(dir);
}

TEST(Sweep, DuplicatesAreSkipped) {
    fs::path dir = scratch_dir("sweep_dup");
    const std::string path = (dir / "reg.jsonl").string();
    ShootConfig a = cheap_config(40, 30), b = cheap_config(45, 30);
    auto out = run_sweep({a, b, a}, path, 2);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_FALSE(out[0].duplicate);
    EXPECT_FALSE(out[1].duplicate);
    EXPECT_TRUE(out[2].duplicate);
    EXPECT_EQ(out[0].config_hash, out[2].config_hash);
    auto again = run_sweep({b}, path);
    EXPECT_TRUE(again[0].duplicate);
    std::ifstream f(path);
    std::size_t lines = 0;
    for (std::string line; std::getline(f, line);) ++lines;
    EXPECT_EQ(lines, 2u);
    fs::remove_all(dir);
}

TEST(Sweep, CostGrowsWithFinalTime) {
    fs::path dir = scratch_dir("sweep_cost");
    std::vector<ShootConfig> cfgs;
    for (double s_in : {100.0, 200.0, 300.0}) cfgs.push_back(cheap_config(s_in, 30));
    auto out = run_sweep(cfgs, (dir / "reg.jsonl").string(), 1);
    ASSERT_EQ(out.size(), 3u);
    for (const auto& e : out) EXPECT_FALSE(e.duplicate);
    EXPECT_LT(out[0].record.wall_time, out[1].record.wall_time);
    EXPECT_LT(out[1].record.wall_time, out[2].record.wall_time);
    fs::remove_all(dir);
}
