#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "atlas.hpp"
#include "connections.hpp"
#include "equilibria.hpp"
#include "mining.hpp"
#include "parameterization.hpp"

namespace crfbp {

inline constexpr const char* kLibraryVersion = "1.0.0";
inline constexpr int kFormatVersion = 1;

using json = nlohmann::json;

// ---- primitives ----

inline json complex_to_json(cplx z) { return json::array({z.real(), z.imag()}); }
inline cplx complex_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline void to_json(json& j, const MassParameters& m) { j = json::array({m.m1, m.m2, m.m3}); }
inline void from_json(const json& j, MassParameters& m) {
    m.m1 = j.at(0).get<double>();
    m.m2 = j.at(1).get<double>();
    m.m3 = j.at(2).get<double>();
}

inline json state_to_json(const State& s) { return json::array({s[0], s[1], s[2], s[3]}); }
inline State state_from_json(const json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

inline void to_json(json& j, const Equilibrium& e) {
    j = json{{"label", e.label}, {"x", e.x}, {"y", e.y}, {"stability", to_string(e.stability)}};
    json ev = json::array(), vecs = json::array();
    for (int i = 0; i < 4; ++i) {
        ev.push_back(complex_to_json(e.eigenvalues[i]));
        json v = json::array();
        for (int k = 0; k < 4; ++k) v.push_back(complex_to_json(e.eigenvectors[i][k]));
        vecs.push_back(v);
    }
    j["eigenvalues"] = ev;
    j["eigenvectors"] = vecs;
}

inline void from_json(const json& j, Equilibrium& e) {
    e.label = j.at("label").get<int>();
    e.x = j.at("x").get<double>();
    e.y = j.at("y").get<double>();
    e.stability = stability_from_string(j.at("stability").get<std::string>());
    for (int i = 0; i < 4; ++i) {
        e.eigenvalues[i] = complex_from_json(j.at("eigenvalues").at(i));
        for (int k = 0; k < 4; ++k) e.eigenvectors[i][k] = complex_from_json(j.at("eigenvectors").at(i).at(k));
    }
}

// ---- local manifolds ----

inline void to_json(json& j, const LocalManifold& L) {
    j = json{{"masses", L.masses}, {"equilibrium", L.eq}, {"side", to_string(L.side)},
             {"lambda", complex_to_json(L.lambda)}, {"scale", L.scale}, {"order", L.order}};
    json xi = json::array();
    for (int k = 0; k < 4; ++k) xi.push_back(complex_to_json(L.xi[k]));
    j["xi"] = xi;
    // coefficients p_{m,n}, m + n <= order, row-major in (k, m, n) as [re, im] pairs
    json re = json::array(), im = json::array();
    for (int k = 0; k < 4; ++k)
        for (int m = 0; m <= L.order; ++m)
            for (int n = 0; m + n <= L.order; ++n) {
                re.push_back(L.P(k, m, n).real());
                im.push_back(L.P(k, m, n).imag());
            }
    j["coefficients"] = json{{"re", re}, {"im", im}};
}

inline void from_json(const json& j, LocalManifold& L) {
    L.masses = j.at("masses").get<MassParameters>();
    L.eq = j.at("equilibrium").get<Equilibrium>();
    L.side = side_from_string(j.at("side").get<std::string>());
    L.lambda = complex_from_json(j.at("lambda"));
    L.scale = j.at("scale").get<double>();
    L.order = j.at("order").get<int>();
    for (int k = 0; k < 4; ++k) L.xi[k] = complex_from_json(j.at("xi").at(k));
    L.P = series::Taylor2<cplx>(4, L.order + 1, L.order + 1);
    L.P.conj_symmetric = true;
    const auto& re = j.at("coefficients").at("re");
    const auto& im = j.at("coefficients").at("im");
    size_t i = 0;
    for (int k = 0; k < 4; ++k)
        for (int m = 0; m <= L.order; ++m)
            for (int n = 0; m + n <= L.order; ++n, ++i) L.P(k, m, n) = {re.at(i).get<double>(), im.at(i).get<double>()};
}

// ---- atlases ----

inline void to_json(json& j, const AtlasParams& p) {
    j = json{{"M", p.M}, {"N", p.N}, {"eps", p.eps}, {"tail_cutoff", p.tail_cutoff}, {"split", p.split},
             {"max_depth", p.max_depth}, {"kappa", p.kappa}, {"K0", p.K0}, {"symmetric", p.symmetric},
             {"T", p.T}, {"local_order", p.local_order}, {"time_threshold", p.time_threshold}};
}

inline void from_json(const json& j, AtlasParams& p) {
    p.M = j.at("M").get<int>();
    p.N = j.at("N").get<int>();
    p.eps = j.at("eps").get<double>();
    p.tail_cutoff = j.at("tail_cutoff").get<int>();
    p.split = j.at("split").get<int>();
    p.max_depth = j.at("max_depth").get<int>();
    p.kappa = j.at("kappa").get<double>();
    p.K0 = j.at("K0").get<int>();
    p.symmetric = j.at("symmetric").get<bool>();
    p.T = j.at("T").get<double>();
    p.local_order = j.at("local_order").get<int>();
    p.time_threshold = j.at("time_threshold").get<double>();
}

inline void to_json(json& j, const Lineage& l) {
    j = json{{"angle_center", l.angle_center}, {"angle_halfwidth", l.angle_halfwidth},
             {"elapsed", l.elapsed}, {"copy", l.copy}, {"history", l.history}};
}

inline void from_json(const json& j, Lineage& l) {
    l.angle_center = j.at("angle_center").get<double>();
    l.angle_halfwidth = j.at("angle_halfwidth").get<double>();
    l.elapsed = j.at("elapsed").get<double>();
    l.copy = j.at("copy").get<int>();
    l.history = j.at("history").get<std::vector<std::array<double, 2>>>();
}

inline void to_json(json& j, const BoundaryArc& a) {
    j = json{{"id", a.id}, {"generation", a.generation}, {"parent_chart", a.parent_chart},
             {"child_chart", a.child_chart}, {"lineage", a.lineage}, {"N", a.gamma.N}, {"gamma", a.gamma.c}};
}

inline void from_json(const json& j, BoundaryArc& a) {
    a.id = j.at("id").get<int>();
    a.generation = j.at("generation").get<int>();
    a.parent_chart = j.at("parent_chart").get<int>();
    a.child_chart = j.at("child_chart").get<int>();
    a.lineage = j.at("lineage").get<Lineage>();
    a.gamma = series::Taylor1<double>(4, j.at("N").get<int>());
    a.gamma.c = j.at("gamma").get<std::vector<double>>();
    if (a.gamma.c.size() != size_t(4 * a.gamma.N)) throw ConfigurationError("arc coefficient count mismatch");
    a.box = make_box(a.gamma);
}

inline void to_json(json& j, const Chart& c) {
    j = json{{"id", c.id}, {"generation", c.generation}, {"parent_arc", c.parent_arc}, {"tau", c.tau},
             {"lineage", c.lineage}, {"M", c.G.M}, {"N", c.G.N}, {"G", c.G.c}};
}

inline void from_json(const json& j, Chart& c) {
    c.id = j.at("id").get<int>();
    c.generation = j.at("generation").get<int>();
    c.parent_arc = j.at("parent_arc").get<int>();
    c.tau = j.at("tau").get<double>();
    c.lineage = j.at("lineage").get<Lineage>();
    c.G = series::Taylor2<double>(4, j.at("M").get<int>(), j.at("N").get<int>());
    c.G.c = j.at("G").get<std::vector<double>>();
    if (c.G.c.size() != size_t(4) * c.G.M * c.G.N) throw ConfigurationError("chart coefficient count mismatch");
    c.box = make_box(c.G);
}

inline void to_json(json& j, const RetiredRegion& r) {
    j = json{{"generation", r.generation}, {"parent_chart", r.parent_chart}, {"angle_lo", r.angle_lo},
             {"angle_hi", r.angle_hi}, {"elapsed", r.elapsed}, {"reason", r.reason}};
}

inline void from_json(const json& j, RetiredRegion& r) {
    r.generation = j.at("generation").get<int>();
    r.parent_chart = j.at("parent_chart").get<int>();
    r.angle_lo = j.at("angle_lo").get<double>();
    r.angle_hi = j.at("angle_hi").get<double>();
    r.elapsed = j.at("elapsed").get<double>();
    r.reason = j.at("reason").get<std::string>();
}

inline void to_json(json& j, const Atlas& A) {
    j = json{{"format", kFormatVersion}, {"local", A.local}, {"side", to_string(A.side)}, {"params", A.params},
             {"charts", A.charts}, {"arcs", A.arcs}, {"generations", A.generations},
             {"frontiers", A.frontiers}, {"pending", A.pending}, {"retired", A.retired},
             {"copy_labels", A.copy_labels}, {"grown_to", A.grown_to}, {"status", A.status}};
}

inline void from_json(const json& j, Atlas& A) {
    A.local = j.at("local").get<LocalManifold>();
    A.side = side_from_string(j.at("side").get<std::string>());
    A.params = j.at("params").get<AtlasParams>();
    A.charts = j.at("charts").get<std::vector<Chart>>();
    A.arcs = j.at("arcs").get<std::vector<BoundaryArc>>();
    A.generations = j.at("generations").get<std::vector<std::vector<int>>>();
    A.frontiers = j.at("frontiers").get<std::vector<std::vector<int>>>();
    A.pending = j.at("pending").get<std::vector<BoundaryArc>>();
    A.retired = j.at("retired").get<std::vector<RetiredRegion>>();
    A.copy_labels = j.at("copy_labels").get<std::vector<int>>();
    A.grown_to = j.at("grown_to").get<double>();
    A.status = j.at("status").get<std::string>();
}

// ---- mining and connections ----

inline void to_json(json& j, const IntersectionCandidate& c) {
    j = json{{"u_chart", c.u_chart}, {"s_chart", c.s_chart}, {"gu", c.gu}, {"gs", c.gs}, {"root", c.root},
             {"residual", c.residual}, {"w_u", c.w_u}, {"w_s", c.w_s}, {"status", to_string(c.status)},
             {"point", state_to_json(c.point)}, {"angle_u", c.angle_u}, {"angle_s", c.angle_s},
             {"copy_s", c.copy_s}, {"t_u", c.t_u}, {"t_s", c.t_s}, {"singular", c.singular},
             {"connection_time", c.connection_time()}};
}

inline void from_json(const json& j, IntersectionCandidate& c) {
    c.u_chart = j.at("u_chart").get<int>();
    c.s_chart = j.at("s_chart").get<int>();
    c.gu = j.at("gu").get<int>();
    c.gs = j.at("gs").get<int>();
    c.root = j.at("root").get<std::array<double, 3>>();
    c.residual = j.at("residual").get<double>();
    c.w_u = j.at("w_u").get<double>();
    c.w_s = j.at("w_s").get<double>();
    c.status = candidate_status_from_string(j.at("status").get<std::string>());
    c.point = state_from_json(j.at("point"));
    c.angle_u = j.at("angle_u").get<double>();
    c.angle_s = j.at("angle_s").get<double>();
    c.copy_s = j.at("copy_s").get<int>();
    c.t_u = j.at("t_u").get<double>();
    c.t_s = j.at("t_s").get<double>();
    c.singular = j.at("singular").get<bool>();
}

inline void to_json(json& j, const Homoclinic& h) {
    json nodes = json::array();
    for (const auto& x : h.nodes) nodes.push_back(state_to_json(x));
    j = json{{"label", h.label}, {"phi_u", h.phi_u}, {"phi_s", h.phi_s}, {"T", h.T}, {"nodes", nodes},
             {"durations", h.durations}, {"winding", h.winding}, {"winding_valid", h.winding_valid},
             {"energy", h.energy}, {"masses", h.masses}, {"residual", h.residual},
             {"iterations", h.iterations}, {"rank", h.rank}, {"group", h.group}, {"status", h.status}};
}

inline void from_json(const json& j, Homoclinic& h) {
    h.label = j.at("label").get<int>();
    h.phi_u = j.at("phi_u").get<double>();
    h.phi_s = j.at("phi_s").get<double>();
    h.T = j.at("T").get<double>();
    h.nodes.clear();
    for (const auto& x : j.at("nodes")) h.nodes.push_back(state_from_json(x));
    h.durations = j.at("durations").get<std::vector<double>>();
    h.winding = j.at("winding").get<std::array<int, 6>>();
    h.winding_valid = j.at("winding_valid").get<bool>();
    h.energy = j.at("energy").get<double>();
    h.masses = j.at("masses").get<MassParameters>();
    h.residual = j.at("residual").get<double>();
    h.iterations = j.at("iterations").get<int>();
    h.rank = j.at("rank").get<int>();
    h.group = j.at("group").get<int>();
    h.status = j.at("status").get<std::string>();
    if (h.nodes.size() + 1 != h.durations.size()) throw ConfigurationError("homoclinic node count mismatch");
}

inline void to_json(json& j, const StepOutcome& s) {
    j = json{{"masses", s.masses}, {"h", s.h}, {"accepted", s.accepted}, {"retired", s.retired},
             {"max_residual", s.max_residual}, {"note", s.note}};
}

inline void to_json(json& j, const ContinuationRun& r) {
    j = json{{"path", r.path}, {"steps", r.steps}, {"current", r.current}, {"retired", r.retired},
             {"bifurcation", r.bifurcation}, {"completed", r.completed}, {"report", r.report},
             {"reached", r.reached}};
}

// ---- files ----

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigurationError("cannot write " + p.string());
    f << text;
}

inline void write_json(const std::filesystem::path& p, const json& j, bool pretty = true) {
    write_text(p, (pretty ? j.dump(1) : j.dump()) + "\n");
}

// a missing upstream artifact names the command that produces it
inline json read_json(const std::filesystem::path& p, const std::string& producer = "") {
    std::ifstream f(p, std::ios::binary);
    if (!f) {
        if (producer.empty()) throw DependencyError("missing input " + p.string());
        throw DependencyError("missing " + p.string() + "; run '" + producer + "' first");
    }
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigurationError("cannot parse " + p.string() + ": " + e.what());
    }
}

template <class T>
T load(const std::filesystem::path& p, const std::string& producer = "") {
    try {
        return read_json(p, producer).get<T>();
    } catch (const json::exception& e) {
        throw ConfigurationError("malformed artifact " + p.string() + ": " + e.what());
    }
}

// FNV-1a, 64 bit
inline std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

// Manifest entries are keyed by command; wall-clock times live in a separate
// object so that everything else is reproducible byte for byte.
inline void update_manifest(const std::filesystem::path& dir, const std::string& command, const json& config,
                            const std::vector<std::string>& outputs, const json& summary,
                            const std::string& timestamp) {
    const auto p = dir / "manifest.json";
    json m = json::object();
    if (std::filesystem::exists(p)) {
        std::ifstream f(p);
        m = json::parse(f, nullptr, false);
        if (m.is_discarded() || !m.is_object()) m = json::object();
    }
    m["library_version"] = kLibraryVersion;
    m["format_version"] = kFormatVersion;
    m["commands"][command] = json{{"config", config},
                                  {"config_hash", fnv1a_hex(config.dump())},
                                  {"outputs", outputs},
                                  {"summary", summary}};
    m["timestamps"][command] = timestamp;
    write_json(p, m);
}

}  // namespace crfbp
