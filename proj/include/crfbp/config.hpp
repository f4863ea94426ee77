#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "atlas.hpp"
#include "connections.hpp"
#include "errors.hpp"
#include "mining.hpp"
#include "model.hpp"

namespace crfbp {

// "1/3" or "0.25"
inline double parse_number(const std::string& s) {
    const auto slash = s.find('/');
    try {
        size_t used = 0;
        if (slash == std::string::npos) {
            const double v = std::stod(s, &used);
            if (used != s.size()) throw ConfigurationError("trailing characters in number: " + s);
            return v;
        }
        const std::string a = s.substr(0, slash), b = s.substr(slash + 1);
        const double num = std::stod(a, &used);
        if (used != a.size()) throw ConfigurationError("bad fraction: " + s);
        const double den = std::stod(b, &used);
        if (used != b.size() || den == 0) throw ConfigurationError("bad fraction: " + s);
        return num / den;
    } catch (const std::logic_error&) {
        throw ConfigurationError("not a number: " + s);
    }
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) {
        const auto b = cur.find_first_not_of(" \t"), e = cur.find_last_not_of(" \t");
        out.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
    }
    return out;
}

// three masses summing to one; two values are taken as (m1, m3)
inline MassParameters parse_masses(const std::string& s) {
    const auto parts = split(s, ',');
    MassParameters mp;
    if (parts.size() == 3) {
        mp = {parse_number(parts[0]), parse_number(parts[1]), parse_number(parts[2])};
        const double sum = mp.m1 + mp.m2 + mp.m3;
        if (std::abs(sum - 1) > 1e-12) throw ConfigurationError("masses must sum to 1: " + s);
        // absorb rounding of decimal input into m2
        mp.m2 = 1 - mp.m1 - mp.m3;
        if (std::abs(mp.m1 - mp.m2) < 1e-12 && std::abs(mp.m2 - mp.m3) < 1e-12) mp = MassParameters::equal();
    } else if (parts.size() == 2) {
        mp = MassParameters::from_m1_m3(parse_number(parts[0]), parse_number(parts[1]));
    } else {
        throw ConfigurationError("masses need three comma-separated values: " + s);
    }
    mp.validate();
    return mp;
}

// "m1,m3;m1,m3;..."
inline std::vector<std::array<double, 2>> parse_path(const std::string& s) {
    std::vector<std::array<double, 2>> out;
    for (const auto& leg : split(s, ';')) {
        if (leg.empty()) continue;
        const auto p = split(leg, ',');
        if (p.size() != 2) throw ConfigurationError("path points are m1,m3 pairs: " + leg);
        out.push_back({parse_number(p[0]), parse_number(p[1])});
    }
    if (out.empty()) throw ConfigurationError("empty continuation path");
    return out;
}

struct RunConfig {
    MassParameters masses = MassParameters::equal();
    int label = 0;
    int local_order = 45;
    double scale = -1;  // heuristic when not positive
    AtlasParams atlas{};
    MiningOptions mining{};
    ShootingOptions shooting{};
    ContinuationControls continuation{};
    std::string path;  // continuation path, empty = none
    std::string output = "crfbp_out";
    int jobs = 1;
    int scan_m1 = 25, scan_m3 = 25;

    RunConfig() {
        atlas.T = 2.5;
        atlas.kappa = 2;
    }

    void validate() const {
        masses.validate();
        if (label < 0 || label > 9) throw ConfigurationError("label must be 0..9");
        if (local_order < 2) throw ConfigurationError("local order must be at least 2");
        atlas.validate();
        if (atlas.symmetric && !masses.is_equal())
            throw ConfigurationError("symmetry flag is only allowed at equal masses");
        if (atlas.symmetric && label != 0) throw ConfigurationError("symmetry flag is only allowed at L0");
        if (!(mining.far > 0 && mining.margin >= 0 && mining.newton_tol > 0 && mining.residual_tol > 0))
            throw ConfigurationError("mining thresholds must be positive");
        if (mining.seeds_per_axis < 1) throw ConfigurationError("seed grid must be at least 1");
        if (shooting.segments < 1) throw ConfigurationError("at least one shooting segment is required");
        if (!(shooting.accept > 0 && shooting.tol > 0)) throw ConfigurationError("shooting tolerances must be positive");
        if (!(continuation.h0 > 0 && continuation.h_min > 0 && continuation.h_max >= continuation.h_min))
            throw ConfigurationError("continuation step controls must be positive");
        if (jobs < 1) throw ConfigurationError("jobs must be at least 1");
    }

    // canonical form used for hashing and for the manifest
    nlohmann::json to_json() const {
        using nlohmann::json;
        return json{
            {"model", {{"masses", {masses.m1, masses.m2, masses.m3}}, {"label", label}}},
            {"manifold", {{"order", local_order}, {"scale", scale}}},
            {"atlas",
             {{"M", atlas.M}, {"N", atlas.N}, {"eps", atlas.eps}, {"tail_cutoff", atlas.tail_cutoff},
              {"split", atlas.split}, {"max_depth", atlas.max_depth}, {"kappa", atlas.kappa}, {"K0", atlas.K0},
              {"symmetric", atlas.symmetric}, {"T", atlas.T}, {"time_threshold", atlas.time_threshold}}},
            {"mining",
             {{"far", mining.far}, {"margin", mining.margin}, {"newton_tol", mining.newton_tol},
              {"newton_max_iter", mining.newton_max_iter}, {"residual_tol", mining.residual_tol},
              {"seeds_per_axis", mining.seeds_per_axis}, {"identity_radius", mining.identity_radius}}},
            {"refine", {{"segments", shooting.segments}, {"tol", shooting.tol}, {"accept", shooting.accept},
                        {"max_iter", shooting.max_iter}}},
            {"continue", {{"path", path}, {"h0", continuation.h0}, {"h_min", continuation.h_min},
                          {"h_max", continuation.h_max}, {"accept", continuation.accept},
                          {"rescale_tol", continuation.rescale_tol}}},
            {"scan", {{"m1_points", scan_m1}, {"m3_points", scan_m3}}},
        };
    }
};

inline void apply_ini(RunConfig& c, const std::string& file) {
    namespace pt = boost::property_tree;
    pt::ptree t;
    try {
        pt::read_ini(file, t);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigurationError(std::string("config file: ") + e.what());
    }
    static const std::vector<std::string> known = {
        "model.masses", "model.label", "manifold.order", "manifold.scale", "atlas.M", "atlas.N", "atlas.eps",
        "atlas.tail_cutoff", "atlas.split", "atlas.max_depth", "atlas.kappa", "atlas.K0", "atlas.symmetric",
        "atlas.T", "atlas.time_threshold", "mining.far", "mining.margin", "mining.newton_tol",
        "mining.newton_max_iter", "mining.residual_tol", "mining.seeds_per_axis", "mining.identity_radius",
        "refine.segments", "refine.tol", "refine.accept", "refine.max_iter", "continue.path", "continue.h0",
        "continue.h_min", "continue.h_max", "continue.accept", "continue.rescale_tol", "scan.m1_points",
        "scan.m3_points", "run.output", "run.jobs"};
    for (const auto& [section, sub] : t)
        for (const auto& [key, _] : sub) {
            const std::string k = section + "." + key;
            if (std::find(known.begin(), known.end(), k) == known.end())
                throw ConfigurationError("unknown config key: " + k);
        }
    auto num = [&](const std::string& k, auto& dst) {
        if (auto v = t.get_optional<std::string>(k)) {
            using T = std::decay_t<decltype(dst)>;
            const double x = parse_number(*v);
            if constexpr (std::is_integral_v<T>) {
                if (x != std::floor(x)) throw ConfigurationError(k + " must be an integer");
            }
            dst = static_cast<T>(x);
        }
    };
    if (auto v = t.get_optional<std::string>("model.masses")) c.masses = parse_masses(*v);
    num("model.label", c.label);
    num("manifold.order", c.local_order);
    num("manifold.scale", c.scale);
    num("atlas.M", c.atlas.M);
    num("atlas.N", c.atlas.N);
    num("atlas.eps", c.atlas.eps);
    num("atlas.tail_cutoff", c.atlas.tail_cutoff);
    num("atlas.split", c.atlas.split);
    num("atlas.max_depth", c.atlas.max_depth);
    num("atlas.kappa", c.atlas.kappa);
    num("atlas.K0", c.atlas.K0);
    if (auto v = t.get_optional<std::string>("atlas.symmetric")) {
        if (*v == "true" || *v == "1") c.atlas.symmetric = true;
        else if (*v == "false" || *v == "0") c.atlas.symmetric = false;
        else throw ConfigurationError("atlas.symmetric must be true or false");
    }
    num("atlas.T", c.atlas.T);
    num("atlas.time_threshold", c.atlas.time_threshold);
    num("mining.far", c.mining.far);
    num("mining.margin", c.mining.margin);
    num("mining.newton_tol", c.mining.newton_tol);
    num("mining.newton_max_iter", c.mining.newton_max_iter);
    num("mining.residual_tol", c.mining.residual_tol);
    num("mining.seeds_per_axis", c.mining.seeds_per_axis);
    num("mining.identity_radius", c.mining.identity_radius);
    num("refine.segments", c.shooting.segments);
    num("refine.tol", c.shooting.tol);
    num("refine.accept", c.shooting.accept);
    num("refine.max_iter", c.shooting.max_iter);
    if (auto v = t.get_optional<std::string>("continue.path")) c.path = *v;
    num("continue.h0", c.continuation.h0);
    num("continue.h_min", c.continuation.h_min);
    num("continue.h_max", c.continuation.h_max);
    num("continue.accept", c.continuation.accept);
    num("continue.rescale_tol", c.continuation.rescale_tol);
    num("scan.m1_points", c.scan_m1);
    num("scan.m3_points", c.scan_m3);
    if (auto v = t.get_optional<std::string>("run.output")) c.output = *v;
    num("run.jobs", c.jobs);
}

}  // namespace crfbp
