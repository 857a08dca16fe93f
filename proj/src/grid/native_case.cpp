#include "gridpse/grid/native_case.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "gridpse/error.hpp"
#include "gridpse/grid/matpower.hpp"

namespace gridpse {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "gridpse-case";
constexpr int kVersion = 1;

json to_json(const Network& net) {
    json buses = json::array();
    for (const auto& b : net.buses()) {
        buses.push_back({{"id", b.id},
                         {"kind", to_string(b.kind)},
                         {"base_kv", b.base_kv},
                         {"g_shunt", b.g_shunt},
                         {"b_shunt", b.b_shunt},
                         {"v_set", b.v_set},
                         {"p_load", b.p_load},
                         {"q_load", b.q_load},
                         {"p_gen", b.p_gen}});
    }
    json branches = json::array();
    for (const auto& br : net.branches()) {
        branches.push_back({{"id", br.id},
                            {"from", br.from},
                            {"to", br.to},
                            {"g", br.g},
                            {"b", br.b},
                            {"charging", br.charging},
                            {"in_service", br.in_service}});
    }
    return {{"base_mva", net.base_mva()}, {"buses", buses}, {"branches", branches}};
}

Network network_from_json(const json& j) {
    std::vector<Bus> buses;
    for (const auto& jb : j.at("buses")) {
        Bus b;
        b.id = jb.at("id").get<int>();
        b.kind = bus_kind_from_string(jb.at("kind").get<std::string>());
        b.base_kv = jb.value("base_kv", 1.0);
        b.g_shunt = jb.value("g_shunt", 0.0);
        b.b_shunt = jb.value("b_shunt", 0.0);
        b.v_set = jb.value("v_set", 1.0);
        b.p_load = jb.value("p_load", 0.0);
        b.q_load = jb.value("q_load", 0.0);
        b.p_gen = jb.value("p_gen", 0.0);
        buses.push_back(b);
    }
    std::vector<Branch> branches;
    for (const auto& jb : j.at("branches")) {
        Branch br;
        br.id = jb.at("id").get<int>();
        br.from = jb.at("from").get<int>();
        br.to = jb.at("to").get<int>();
        br.g = jb.at("g").get<double>();
        br.b = jb.at("b").get<double>();
        br.charging = jb.value("charging", 0.0);
        br.in_service = jb.value("in_service", true);
        branches.push_back(br);
    }
    Network net(std::move(buses), std::move(branches), j.value("base_mva", 100.0));
    require_valid(net);
    return net;
}

json to_json(const MeasurementSet& m) {
    json periods = json::array();
    for (const auto& p : m.periods) {
        json inj = json::array();
        for (const auto& z : p.injections) inj.push_back({z.bus, z.p, z.q, z.vmag, z.w_current, z.w_voltage});
        json flows = json::array();
        for (const auto& z : p.flows) flows.push_back({z.branch, z.metered_bus, z.p, z.q, z.vmag, z.w_current});
        periods.push_back({{"injections", inj}, {"flows", flows}});
    }
    return periods;
}

MeasurementSet measurements_from_json(const json& periods, const json& zi) {
    MeasurementSet m;
    for (const auto& jp : periods) {
        MeasurementPeriod p;
        for (const auto& r : jp.at("injections")) {
            if (!r.is_array() || r.size() != 6) throw ParseError("injection row must have 6 fields");
            p.injections.push_back({r[0].get<int>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>(),
                                    r[4].get<double>(), r[5].get<double>()});
        }
        for (const auto& r : jp.value("flows", json::array())) {
            if (!r.is_array() || r.size() != 6) throw ParseError("flow row must have 6 fields");
            p.flows.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<double>(), r[3].get<double>(),
                               r[4].get<double>(), r[5].get<double>()});
        }
        m.periods.push_back(std::move(p));
    }
    if (zi.is_array()) m.zero_injection_buses = zi.get<std::vector<int>>();
    return m;
}

}  // namespace

NativeCase parse_native_case(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed case document: ") + e.what());
    }
    NativeCase out;
    try {
        if (j.contains("format") && j.at("format").get<std::string>() != kFormat)
            throw ParseError("unexpected format tag '" + j.at("format").get<std::string>() + "'");
        out.network = network_from_json(j.at("network"));
        for (const auto& ju : j.value("unknown_parameters", json::array())) {
            UnknownParameter p;
            p.target = parameter_target_from_string(ju.at("target").get<std::string>());
            p.element = ju.at("element").get<int>();
            if (ju.contains("best_known") && !ju.at("best_known").is_null())
                p.best_known = ju.at("best_known").get<double>();
            out.unknowns.push_back(p);
        }
        if (j.contains("measurements") && !j.at("measurements").is_null())
            out.measurements =
                measurements_from_json(j.at("measurements"), j.value("zero_injection_buses", json::array()));
    } catch (const json::exception& e) {
        throw ParseError(std::string("case schema violation: ") + e.what());
    }
    auto issues = validate(out.network, out.unknowns);
    if (!issues.empty()) throw DataError(issues.front());
    return out;
}

std::string serialize_native_case(const NativeCase& c) {
    json j;
    j["format"] = kFormat;
    j["version"] = kVersion;
    j["network"] = to_json(c.network);
    json unknowns = json::array();
    for (const auto& p : c.unknowns) {
        json ju = {{"target", to_string(p.target)}, {"element", p.element}};
        ju["best_known"] = p.best_known ? json(*p.best_known) : json(nullptr);
        unknowns.push_back(ju);
    }
    j["unknown_parameters"] = unknowns;
    if (c.measurements) {
        j["measurements"] = to_json(*c.measurements);
        j["zero_injection_buses"] = c.measurements->zero_injection_buses;
    }
    return j.dump(1);
}

NativeCase load_native_case_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open case file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_native_case(ss.str());
}

void save_native_case_file(const std::string& path, const NativeCase& c) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << serialize_native_case(c) << '\n';
}

NativeCase load_case_file(const std::string& path) {
    if (path.size() >= 2 && path.substr(path.size() - 2) == ".m") return {load_matpower_file(path), {}, std::nullopt};
    return load_native_case_file(path);
}

}  // namespace gridpse
