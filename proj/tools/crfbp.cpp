#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include <crfbp/config.hpp>
#include <crfbp/io.hpp>

using namespace crfbp;
namespace fs = std::filesystem;

namespace {

struct Flags {
    std::string config;
    std::optional<std::string> masses, output, path;
    std::optional<int> label, order, K0, segments, jobs;
    std::optional<double> T, kappa, scale;
    std::optional<bool> symmetric;
    std::string export_atlas, export_out;
};

RunConfig resolve(const Flags& f) {
    RunConfig c;
    if (!f.config.empty()) apply_ini(c, f.config);
    if (f.masses) c.masses = parse_masses(*f.masses);
    if (f.output) c.output = *f.output;
    if (f.path) c.path = *f.path;
    if (f.label) c.label = *f.label;
    if (f.order) c.local_order = *f.order;
    if (f.K0) c.atlas.K0 = *f.K0;
    if (f.segments) c.shooting.segments = *f.segments;
    if (f.jobs) c.jobs = *f.jobs;
    if (f.T) c.atlas.T = *f.T;
    if (f.kappa) c.atlas.kappa = *f.kappa;
    if (f.scale) c.scale = *f.scale;
    if (f.symmetric) c.atlas.symmetric = *f.symmetric;
    c.atlas.local_order = c.local_order;
    c.validate();
    return c;
}

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void record(const RunConfig& c, const std::string& cmd, const std::vector<std::string>& outputs,
            const json& summary) {
    update_manifest(c.output, cmd, c.to_json(), outputs, summary, now_utc());
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void check_masses(const RunConfig& c, const MassParameters& mp, const std::string& producer) {
    if (std::abs(mp.m1 - c.masses.m1) > 1e-14 || std::abs(mp.m3 - c.masses.m3) > 1e-14)
        throw ConfigurationError("artifacts on disk were computed for other masses; rerun '" + producer + "'");
}

std::vector<Equilibrium> solve_equilibria(const RunConfig& c) {
    auto rep = find_equilibria_report(c.masses);
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
    return rep.points;
}

int cmd_equilibria(const RunConfig& c) {
    const auto eqs = solve_equilibria(c);
    std::printf("%-4s %22s %22s  %s\n", "name", "x", "y", "stability");
    for (const auto& e : eqs) std::printf("%-4s %22.15f %22.15f  %s\n", e.name().c_str(), e.x, e.y, to_string(e.stability));
    write_json(fs::path(c.output) / "equilibria.json", json{{"masses", c.masses}, {"points", eqs}});
    record(c, "equilibria", {"equilibria.json"}, {{"count", eqs.size()}});
    return 0;
}

int cmd_scan(const RunConfig& c) {
    const auto rows = scan_simplex(c.scan_m1, c.scan_m3);
    json out = json::array();
    int saddle = 0;
    for (const auto& r : rows) {
        out.push_back({{"m1", r.m1}, {"m3", r.m3}, {"L0", r.flags[0]}, {"L4", r.flags[1]}, {"L5", r.flags[2]},
                       {"L6", r.flags[3]}});
        saddle += r.flags[0] == 1;
    }
    write_json(fs::path(c.output) / "scan.json", out);
    std::printf("%zu mass points, L0 saddle-focus at %d\n", rows.size(), saddle);
    record(c, "scan", {"scan.json"}, {{"points", rows.size()}, {"l0_saddle_focus", saddle}});
    return 0;
}

int cmd_local_manifold(const RunConfig& c) {
    const auto eqs = solve_equilibria(c);
    const auto eq = find_labeled(eqs, c.label);
    if (!eq) throw ConfigurationError("no equilibrium labeled L" + std::to_string(c.label) + " at these masses");
    if (eq->stability != Stability::SaddleFocus)
        throw ConfigurationError(eq->name() + " is not a saddle-focus at these masses");
    json summary = json::object();
    for (Side side : {Side::Unstable, Side::Stable}) {
        const auto L = compute_local_manifold(*eq, c.masses, side, c.local_order, c.scale);
        const std::string name = std::string("local_") + to_string(side) + ".json";
        write_json(fs::path(c.output) / name, json(L), false);
        const double d = defect(L), cj = conjugacy_error(L);
        summary[to_string(side)] = {{"scale", L.scale}, {"defect", d}, {"conjugacy", cj}};
        std::printf("%-8s scale %.6g  defect %.3e  conjugacy %.3e\n", to_string(side), L.scale, d, cj);
    }
    record(c, "local-manifold", {"local_unstable.json", "local_stable.json"}, summary);
    return 0;
}

std::pair<LocalManifold, LocalManifold> load_locals(const RunConfig& c) {
    auto Lu = load<LocalManifold>(fs::path(c.output) / "local_unstable.json", "local-manifold");
    auto Ls = load<LocalManifold>(fs::path(c.output) / "local_stable.json", "local-manifold");
    check_masses(c, Lu.masses, "local-manifold");
    return {std::move(Lu), std::move(Ls)};
}

json generation_counts(const Atlas& A) {
    json g = json::array();
    for (size_t i = 1; i < A.generations.size(); ++i) g.push_back(A.generations[i].size());
    return g;
}

int cmd_grow(const RunConfig& c) {
    const auto [Lu, Ls] = load_locals(c);
    const Atlas Au = build_atlas(Lu, c.atlas);
    Atlas As = build_atlas(Ls, c.atlas);
    if (c.atlas.symmetric) As = symmetry_expand(As);
    write_json(fs::path(c.output) / "atlas_unstable.json", json(Au), false);
    write_json(fs::path(c.output) / "atlas_stable.json", json(As), false);
    json summary;
    for (const Atlas* A : {&Au, static_cast<const Atlas*>(&As)}) {
        summary[to_string(A->side)] = {{"charts", A->chart_count()}, {"generations", generation_counts(*A)},
                                       {"retired", A->retired.size()}, {"status", A->status}};
        std::printf("%-8s %d charts in %zu generations, %zu retired regions\n", to_string(A->side),
                    A->chart_count(), A->generations.size() - 1, A->retired.size());
    }
    record(c, "grow", {"atlas_unstable.json", "atlas_stable.json"}, summary);
    return Au.status == "ok" && As.status == "ok" ? 0 : 3;
}

int cmd_mine(const RunConfig& c) {
    const auto Au = load<Atlas>(fs::path(c.output) / "atlas_unstable.json", "grow");
    const auto As = load<Atlas>(fs::path(c.output) / "atlas_stable.json", "grow");
    check_masses(c, Au.local.masses, "grow");
    MiningReport rep;
    auto cands = mine(Au, As, c.mining, &rep);
    for (auto& x : cands)
        if (x.status == CandidateStatus::Ambiguous) resolve_ambiguous(x, Au, As, c.mining);
    write_json(fs::path(c.output) / "candidates.json", json(cands));
    int counts[3] = {0, 0, 0};
    for (const auto& x : cands) ++counts[int(x.status)];
    std::printf("%zu candidates: %d certified, %d pseudo, %d ambiguous\n", cands.size(), counts[0], counts[1],
                counts[2]);
    for (const auto& x : cands)
        if (x.status == CandidateStatus::Certified) std::printf("  T = %.6f\n", x.connection_time());
    record(c, "mine", {"candidates.json"},
           {{"pairs_considered", rep.pairs_considered}, {"pairs_boxed", rep.pairs_boxed},
            {"candidates", cands.size()}, {"certified", counts[0]}, {"pseudo", counts[1]},
            {"ambiguous", counts[2]}});
    return 0;
}

int cmd_refine(const RunConfig& c) {
    const auto [Lu, Ls] = load_locals(c);
    const auto cands = load<std::vector<IntersectionCandidate>>(fs::path(c.output) / "candidates.json", "mine");
    std::vector<Homoclinic> hs;
    int failed = 0;
    for (const auto& x : certified_only(cands)) {
        Homoclinic h = refine(x, Lu, Ls, c.shooting);
        if (!h.ok()) {
            ++failed;
            std::cerr << "candidate at T = " << x.connection_time() << ": " << h.status << "\n";
            continue;
        }
        try {
            h.winding = winding_vector(h, Lu, Ls);
            h.winding_valid = true;
        } catch (const WindingUndefined& e) {
            std::cerr << "winding undefined at T = " << h.T << ": " << e.what() << "\n";
        }
        hs.push_back(h);
    }
    hs = order_connections(hs);
    write_json(fs::path(c.output) / "connections.json", json(hs));
    for (const auto& h : hs) {
        std::printf("%3d  T = %.10f  residual %.2e  winding", h.rank, h.T, h.residual);
        for (int w : h.winding) std::printf(" %d", w);
        std::printf("\n");
    }
    record(c, "refine", {"connections.json"}, {{"refined", hs.size()}, {"failed", failed}});
    return hs.empty() && failed > 0 ? 3 : 0;
}

int cmd_continue(const RunConfig& c) {
    const auto [Lu, Ls] = load_locals(c);
    const auto hs = load<std::vector<Homoclinic>>(fs::path(c.output) / "connections.json", "refine");
    if (c.path.empty()) throw ConfigurationError("continue needs a path (--path or [continue] path)");
    auto path = parse_path(c.path);
    if (std::abs(path[0][0] - Lu.masses.m1) > 1e-12 || std::abs(path[0][1] - Lu.masses.m3) > 1e-12)
        path.insert(path.begin(), {Lu.masses.m1, Lu.masses.m3});
    ContinuationControls ctl = c.continuation;
    ctl.shooting = c.shooting;
    ctl.track_winding = true;
    const auto run = continue_ensemble(hs, Lu, Ls, path, ctl);
    write_json(fs::path(c.output) / "continuation.json", json(run));
    double worst = 0;
    for (const auto& s : run.steps) worst = std::max(worst, s.max_residual);
    std::printf("reached m = (%.6f, %.6f, %.6f) in %zu steps, %zu of %zu connections alive, worst residual %.2e\n",
                run.reached.m1, run.reached.m2, run.reached.m3, run.steps.size(), run.current.size(), hs.size(),
                worst);
    if (!run.report.empty()) std::printf("%s\n", run.report.c_str());
    record(c, "continue", {"continuation.json"},
           {{"completed", run.completed}, {"bifurcation", run.bifurcation}, {"reached", run.reached},
            {"steps", run.steps.size()}, {"alive", run.current.size()}});
    return run.completed ? 0 : 3;
}

// chart samples on a small (s, t) grid
void export_atlas(const Atlas& A, const fs::path& out) {
    std::ostringstream os;
    os << "chart,generation,copy,elapsed,s,t,x,xdot,y,ydot\n";
    for (const auto& ch : A.charts)
        for (double t : {0.0, 0.5, 1.0})
            for (double s : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
                const State p = ch.eval(s, t);
                os << ch.id << ',' << ch.generation << ',' << ch.lineage.copy << ',' << fmt(ch.lineage.elapsed)
                   << ',' << fmt(s) << ',' << fmt(t);
                for (double v : p) os << ',' << fmt(v);
                os << '\n';
            }
    write_text(out, os.str());
}

void export_connections(const std::vector<Homoclinic>& hs, const LocalManifold& Lu, const fs::path& out) {
    std::ostringstream os;
    os << "rank,T,point,x,xdot,y,ydot\n";
    if (!hs.empty()) {
        const auto centers = winding_centers(Lu.masses);
        for (const auto& h : hs) {
            const auto pts = dense_orbit(h, Lu, centers);
            for (size_t i = 0; i < pts.size(); ++i) {
                os << h.rank << ',' << fmt(h.T) << ',' << i;
                for (double v : pts[i]) os << ',' << fmt(v);
                os << '\n';
            }
        }
    }
    write_text(out, os.str());
}

int cmd_export(const RunConfig& c, const Flags& f) {
    const fs::path dir = c.output;
    std::vector<std::string> written;
    if (!f.export_atlas.empty()) {
        const auto A = load<Atlas>(f.export_atlas);
        const fs::path out = f.export_out.empty() ? fs::path(f.export_atlas).replace_extension(".csv") : fs::path(f.export_out);
        export_atlas(A, out);
        std::printf("%s: %d charts\n", out.string().c_str(), A.chart_count());
        return 0;
    }
    if (fs::exists(dir / "equilibria.json")) {
        const auto j = read_json(dir / "equilibria.json");
        std::ostringstream os;
        os << "name,label,x,y,stability\n";
        for (const auto& e : j.at("points").get<std::vector<Equilibrium>>())
            os << e.name() << ',' << e.label << ',' << fmt(e.x) << ',' << fmt(e.y) << ',' << to_string(e.stability)
               << '\n';
        write_text(dir / "equilibria.csv", os.str());
        written.push_back("equilibria.csv");
    }
    for (const char* side : {"unstable", "stable"}) {
        const auto p = dir / (std::string("atlas_") + side + ".json");
        if (!fs::exists(p)) continue;
        export_atlas(load<Atlas>(p), dir / (std::string("atlas_") + side + ".csv"));
        written.push_back(std::string("atlas_") + side + ".csv");
    }
    if (fs::exists(dir / "connections.json")) {
        const auto hs = load<std::vector<Homoclinic>>(dir / "connections.json");
        const auto Lu = load<LocalManifold>(dir / "local_unstable.json", "local-manifold");
        export_connections(hs, Lu, dir / "connections.csv");
        written.push_back("connections.csv");
    }
    if (fs::exists(dir / "continuation.json")) {
        const auto j = read_json(dir / "continuation.json");
        std::ostringstream os;
        os << "step,m1,m2,m3,h,accepted,retired,max_residual\n";
        int i = 0;
        for (const auto& s : j.at("steps")) {
            const auto mp = s.at("masses").get<MassParameters>();
            os << i++ << ',' << fmt(mp.m1) << ',' << fmt(mp.m2) << ',' << fmt(mp.m3) << ','
               << fmt(s.at("h").get<double>()) << ',' << s.at("accepted").get<int>() << ','
               << s.at("retired").get<int>() << ','
               << fmt(s.at("max_residual").get<double>()) << '\n';
        }
        write_text(dir / "continuation.csv", os.str());
        written.push_back("continuation.csv");
    }
    if (written.empty()) throw DependencyError("nothing to export in " + dir.string() + "; run 'equilibria' or 'grow' first");
    for (const auto& w : written) std::printf("%s\n", (dir / w).string().c_str());
    record(c, "export", written, {{"files", written.size()}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Invariant manifolds and homoclinic connections in the equilateral restricted four-body problem"};
    app.require_subcommand(1);
    app.fallthrough();
    Flags f;
    app.add_option("-c,--config", f.config, "INI configuration file")->check(CLI::ExistingFile);
    app.add_option("--masses", f.masses, "m1,m2,m3 (fractions allowed) or m1,m3");
    app.add_option("-o,--output", f.output, "output directory");
    app.add_option("--label", f.label, "equilibrium label 0..9");
    app.add_option("--order", f.order, "local manifold order");
    app.add_option("--scale", f.scale, "eigenvector scale (default: heuristic)");
    app.add_option("-T,--time", f.T, "integration time for atlas growth");
    app.add_option("--kappa", f.kappa, "speed bound for arc clipping");
    app.add_option("--K0", f.K0, "initial boundary arcs");
    app.add_option("--symmetric", f.symmetric, "reduced one-third boundary (true/false)");
    app.add_option("--segments", f.segments, "shooting segments");
    app.add_option("--path", f.path, "continuation path m1,m3;m1,m3;...");
    app.add_option("-j,--jobs", f.jobs, "worker count");

    std::vector<std::pair<std::string, std::string>> cmds = {
        {"equilibria", "locate and classify the libration points"},
        {"scan", "saddle-focus map over the mass simplex"},
        {"local-manifold", "parameterize the local stable and unstable manifolds"},
        {"grow", "grow both manifold atlases to the target time"},
        {"mine", "intersect the atlases and certify candidates"},
        {"refine", "refine certified candidates by multiple shooting"},
        {"continue", "continue refined connections along a mass path"},
        {"export", "flatten artifacts to CSV"}};
    std::map<std::string, CLI::App*> sub;
    for (const auto& [name, help] : cmds) sub[name] = app.add_subcommand(name, help);
    sub["export"]->add_option("--atlas", f.export_atlas, "export a single atlas file");
    sub["export"]->add_option("--to", f.export_out, "destination for --atlas");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const RunConfig c = resolve(f);
        if (sub["equilibria"]->parsed()) return cmd_equilibria(c);
        if (sub["scan"]->parsed()) return cmd_scan(c);
        if (sub["local-manifold"]->parsed()) return cmd_local_manifold(c);
        if (sub["grow"]->parsed()) return cmd_grow(c);
        if (sub["mine"]->parsed()) return cmd_mine(c);
        if (sub["refine"]->parsed()) return cmd_refine(c);
        if (sub["continue"]->parsed()) return cmd_continue(c);
        if (sub["export"]->parsed()) return cmd_export(c, f);
    } catch (const ConfigurationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
