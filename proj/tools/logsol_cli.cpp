#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "logsol/logsol.hpp"

using namespace logsol;
using nlohmann::json;

namespace {

json read_json_arg(const std::string& arg) {
    std::ifstream f(arg);
    try {
        if (f) return json::parse(f);
        return json::parse(arg);
    } catch (const json::exception& e) {
        throw InvalidConfig("cannot parse JSON from '" + arg + "': " + e.what());
    }
}

json params_json(const BubbleParams& q) {
    return {{"lambda", q.lambda}, {"z", {q.z[0], q.z[1]}}, {"gamma", q.gamma}, {"v", {q.v[0], q.v[1]}}};
}

BubbleParams params_from(const json& j) {
    BubbleParams q;
    q.lambda = j.value("lambda", 1.0);
    auto vec = [&](const char* key) {
        Vec v{0.0, 0.0};
        if (!j.contains(key)) return v;
        const auto& a = j.at(key);
        if (a.is_number()) return Vec{a.get<double>(), 0.0};
        for (std::size_t i = 0; i < std::min<std::size_t>(2, a.size()); ++i) v[i] = a.at(i).get<double>();
        return v;
    };
    q.z = vec("z");
    q.gamma = j.value("gamma", 0.0);
    q.v = vec("v");
    return q;
}

void emit_record(const RunRecord& r, const std::string& out) {
    if (out.empty()) {
        std::cout << to_json(r).dump() << '\n';
        return;
    }
    std::ofstream f(out + ".jsonl");
    if (!f) throw IoFailure("cannot open " + out + ".jsonl");
    f << to_json(r).dump() << '\n';
    write_trajectory_csv(out + ".csv", r);
    std::cout << json{{"exit", to_string(r.exit)}, {"phi", r.phi}, {"s_reached", r.s_reached},
                      {"zeta_sharp", r.zeta_sharp}, {"wall_time", r.wall_time}}
                     .dump()
              << '\n';
}

int run_simulate(const std::string& path) {
    json cfg = read_json_arg(path);
    const int d = cfg.value("d", 1), N = cfg.value("N", 2048);
    const double L = cfg.value("L", 64.0), p = cfg.value("p", 3.0), dt = cfg.value("dt", 1e-3);
    const double t_end = cfg.value("t_end", 1.0);
    const long every = cfg.value("observables_every", 100L);
    const int order = cfg.value("order", 2);
    Grid g = make_grid(d, N, L);
    ComplexField u;
    const json init = cfg.value("initial", json::object());
    if (init.contains("file")) {
        u = read_snapshot(init.at("file").get<std::string>()).field;
        if (!(u.grid == g)) throw InvalidConfig("snapshot grid differs from config grid");
    } else {
        GroundState gs = solve_profile(p, d);
        u = build_two_bubble(params_from(init), gs, g);
    }
    const long steps = std::lround(std::abs(t_end) / dt);
    const double sdt = t_end < 0 ? -dt : dt;
    std::vector<std::vector<double>> rows;
    PropagateOptions opt;
    opt.order = order;
    double t = 0;
    auto obs_row = [&] {
        Observables ob = observables(u, p);
        rows.push_back({t, ob.mass, ob.energy, ob.momentum[0], ob.momentum[1], ob.variance, ob.h1});
    };
    obs_row();
    for (long done = 0; done < steps;) {
        long n = std::min(every, steps - done);
        u = sdt < 0 ? propagate_backward(u, -sdt, n, p, opt) : propagate(u, sdt, n, p, opt);
        done += n;
        t = done * sdt;
        obs_row();
    }
    const std::string out = cfg.value("output", "simulate_observables.csv");
    write_csv(out, {"t", "mass", "energy", "momentum1", "momentum2", "variance", "h1"}, rows);
    if (cfg.contains("snapshot")) write_snapshot(cfg.at("snapshot").get<std::string>(), u, t);
    std::cout << json{{"observables", out}, {"steps", steps}, {"t", t}}.dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-soliton NLS laboratory: ground states, interaction, reduced dynamics, shooting"};
    app.require_subcommand(1);

    double p = 3.0, tol = 1e-12;
    int d = 1;
    std::string csv;
    auto* gs_cmd = app.add_subcommand("groundstate", "ground-state profile and structure constants");
    gs_cmd->add_option("--p", p, "nonlinearity exponent")->required();
    gs_cmd->add_option("--d", d, "dimension")->required();
    gs_cmd->add_option("--tol", tol, "shooting bracket width");
    gs_cmd->add_option("--csv", csv, "write profile (r, q, dq)");

    std::vector<double> zs;
    auto* int_cmd = app.add_subcommand("interaction", "interaction force H(z) against its asymptotic law");
    int_cmd->add_option("--p", p)->required();
    int_cmd->add_option("--d", d)->required();
    int_cmd->add_option("--z", zs, "separations")->required();
    int_cmd->add_option("--csv", csv, "output file (default stdout)");

    std::string mode = "asymptotic";
    double s0 = 10, s_end = 1e4, z0 = std::nan(""), v0 = std::nan(""), zdot0 = 1.0, t_end = 100.0;
    auto* red_cmd = app.add_subcommand("reduced", "reduced modulation system or the toy double-pole ODE");
    red_cmd->add_option("--mode", mode)->check(CLI::IsMember({"full", "asymptotic", "toy"}));
    red_cmd->add_option("--p", p);
    red_cmd->add_option("--d", d);
    red_cmd->add_option("--s0", s0);
    red_cmd->add_option("--s-end", s_end);
    red_cmd->add_option("--z0", z0, "initial |z| (default: model regime); toy: z(1)");
    red_cmd->add_option("--v0", v0, "initial |v| (default: zero-energy speed)");
    red_cmd->add_option("--zdot0", zdot0, "toy: z'(1)");
    red_cmd->add_option("--t-end", t_end, "toy: final time");
    red_cmd->add_option("--csv", csv);

    std::string config;
    auto* sim_cmd = app.add_subcommand("simulate", "split-step evolution from a JSON config");
    sim_cmd->add_option("--config", config)->required();

    std::string field, guess, fit_mode = "snapshot";
    auto* fit_cmd = app.add_subcommand("fit", "modulation fit of a binary snapshot");
    fit_cmd->add_option("--field", field)->required();
    fit_cmd->add_option("--guess", guess, "JSON file or inline JSON with lambda, z, gamma, v")->required();
    fit_cmd->add_option("--p", p);
    fit_cmd->add_option("--mode", fit_mode)->check(CLI::IsMember({"snapshot", "tracking"}));

    double zeta_sharp = std::nan("");
    std::string out;
    auto* shoot_cmd = app.add_subcommand("shoot", "one backward shooting run");
    shoot_cmd->add_option("--config", config)->required();
    shoot_cmd->add_option("--zeta-sharp", zeta_sharp);
    shoot_cmd->add_option("--out", out, "prefix for <out>.jsonl and <out>.csv");

    auto* bis_cmd = app.add_subcommand("bisect", "bisection over zeta_sharp");
    bis_cmd->add_option("--config", config)->required();
    bis_cmd->add_option("--out", out);

    std::string record;
    auto* ver_cmd = app.add_subcommand("verify", "logarithmic-regime report for a run record");
    ver_cmd->add_option("--record", record)->required();

    std::string dir, registry = "registry.jsonl";
    auto* sweep_cmd = app.add_subcommand("sweep", "run every *.json config in a directory");
    sweep_cmd->add_option("--configs", dir)->required();
    sweep_cmd->add_option("--registry", registry);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gs_cmd) {
            GroundState gs = solve_profile(p, d, tol);
            StructureConstants sc = structure_constants(gs);
            AsymptoticFit fit = asymptotic_constant(gs);
            std::cout << json{{"p", p}, {"d", d}, {"q0", gs.q0()}, {"c_Q", sc.c_Q}, {"fit_residual", fit.residual},
                              {"I_Q", sc.I_Q}, {"c1", sc.c1}, {"c2", sc.c2}, {"C_p", sc.C_p}, {"c", sc.c},
                              {"mass", sc.mass}}
                             .dump(2)
                      << '\n';
            if (!csv.empty()) {
                std::vector<std::vector<double>> rows;
                for (std::size_t i = 0; i < gs.sample_count(); ++i)
                    rows.push_back({gs.sample_r(i), gs.sample_q(i), gs.sample_dq(i)});
                write_csv(csv, {"r", "q", "dq"}, rows);
            }
        } else if (*int_cmd) {
            GroundState gs = solve_profile(p, d);
            StructureConstants sc = structure_constants(gs);
            std::vector<std::vector<double>> rows;
            for (double z : zs) {
                double h = interaction_force_H({z, 0.0}, gs)[0];
                double a = interaction_force_asymptotic({z, 0.0}, sc.C_p, d)[0];
                rows.push_back({z, h, a, h / a - 1.0});
            }
            std::vector<std::string> header{"z", "H_num", "H_asym", "rel_err"};
            if (csv.empty()) {
                std::cout << "z,H_num,H_asym,rel_err\n" << std::setprecision(12);
                for (const auto& r : rows) std::cout << r[0] << ',' << r[1] << ',' << r[2] << ',' << r[3] << '\n';
            } else {
                write_csv(csv, header, rows);
            }
        } else if (*red_cmd) {
            std::vector<std::vector<double>> rows;
            std::vector<std::string> header;
            if (mode == "toy") {
                auto traj = toy_double_pole(std::isnan(z0) ? 0.0 : z0, zdot0, t_end);
                header = {"s_or_t", "z", "zdot", "energy", "z_minus_log_t"};
                for (const auto& s : traj) rows.push_back({s.t, s.z, s.zdot, s.energy, s.z - std::log(s.t)});
            } else {
                GroundState gs = solve_profile(p, d);
                ReducedModel m{gs, structure_constants(gs)};
                ReducedOptions o;
                o.mode = mode == "full" ? ForceMode::quadrature : ForceMode::asymptotic;
                ReducedState st = model_solution(s0, m.sc.c, d);
                if (!std::isnan(z0)) st.z = {z0, 0.0};
                st.v = {std::isnan(v0) ? matched_speed(st.z[0], m, o.mode) : v0, 0.0};
                auto traj = integrate_reduced(st, s_end, m, o);
                header = {"s_or_t", "lambda"};
                for (int j = 0; j < d; ++j) header.push_back("z" + std::to_string(j + 1));
                header.push_back("gamma");
                for (int j = 0; j < d; ++j) header.push_back("v" + std::to_string(j + 1));
                header.push_back("energy");
                for (const auto& s : traj) {
                    std::vector<double> r{s.s, s.lambda};
                    for (int j = 0; j < d; ++j) r.push_back(s.z[j]);
                    r.push_back(s.gamma);
                    for (int j = 0; j < d; ++j) r.push_back(s.v[j]);
                    r.push_back(dot(s.v, s.v) - reduced_potential(norm(s.z), m, o.mode));
                    rows.push_back(std::move(r));
                }
            }
            write_csv(csv.empty() ? "/dev/stdout" : csv, header, rows);
        } else if (*sim_cmd) {
            return run_simulate(config);
        } else if (*fit_cmd) {
            Snapshot snap = read_snapshot(field);
            GroundState gs = solve_profile(p, snap.field.grid.d());
            DecompOptions o;
            BubbleParams g0 = params_from(read_json_arg(guess));
            if (fit_mode == "tracking") {
                o.mode = FitMode::tracking;
                o.v_override = g0.v;
            }
            DecompResult r = decompose(snap.field, g0, gs, o);
            std::cout << json{{"params", params_json(r.params)}, {"eps_h1", r.eps_h1},
                              {"projections", r.projections}, {"newton_iters", r.newton_iters},
                              {"step_history", r.step_history}}
                             .dump(2)
                      << '\n';
        } else if (*shoot_cmd) {
            ShootConfig cfg = load_shoot_config(config);
            emit_record(backward_shoot(cfg, std::isnan(zeta_sharp) ? cfg.zeta_sharp : zeta_sharp), out);
        } else if (*bis_cmd) {
            ShootConfig cfg = load_shoot_config(config);
            BisectResult b = bisect_zeta(cfg);
            json steps = json::array();
            for (const auto& s : b.steps)
                steps.push_back({{"zeta_sharp", s.zeta_sharp}, {"width", s.width}, {"exit", to_string(s.exit)},
                                 {"phi", s.phi}, {"s_reached", s.s_reached}});
            std::cerr << json{{"zeta_sharp_star", b.zeta_sharp_star}, {"phi_lo", b.lo_record.phi},
                              {"phi_hi", b.hi_record.phi}, {"steps", steps}}
                             .dump()
                      << '\n';
            emit_record(b.record, out);
        } else if (*ver_cmd) {
            RunRecord r = load_record(record);
            ShootContext ctx = make_context(r.config.p, r.config.d);
            RegimeReport rep = verify_regime(r, ctx.sc.c);
            std::cout << json{{"slope", rep.slope}, {"C", rep.C}, {"residual", rep.residual},
                              {"sup_lambda_t", rep.sup_lambda}, {"sup_v_t", rep.sup_v}, {"sup_eps_t", rep.sup_eps},
                              {"tube", rep.tube}, {"samples", rep.n}}
                             .dump(2)
                      << '\n';
        } else if (*sweep_cmd) {
            std::vector<ShootConfig> cfgs;
            std::vector<std::filesystem::path> files;
            for (const auto& e : std::filesystem::directory_iterator(dir))
                if (e.path().extension() == ".json") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) cfgs.push_back(load_shoot_config(f.string()));
            auto res = run_sweep(cfgs, registry);
            for (std::size_t i = 0; i < res.size(); ++i)
                std::cout << json{{"config", files[i].string()}, {"hash", res[i].config_hash},
                                  {"duplicate", res[i].duplicate}, {"exit", to_string(res[i].record.exit)},
                                  {"wall_time", res[i].record.wall_time}}
                                 .dump()
                          << '\n';
        }
    } catch (const Error& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "IoFailure: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
