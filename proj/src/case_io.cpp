#include "tdcosim/case_io.hpp"

#include "tdcosim/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace tdcosim {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error while reading " + path.string());
    return ss.str();
}

json parse_json(const std::string& text) {
    try {
        return json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
}

/// [re, im] pair.
Complex complex_of(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ValidationError(std::string(what) + " must be a [re, im] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

double number(const json& obj, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) throw ValidationError(std::string("'") + key + "' must be a number");
    return obj[key].get<double>();
}

double required_number(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || !obj[key].is_number())
        throw ValidationError(where + ": missing numeric '" + key + "'");
    return obj[key].get<double>();
}

int required_int(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || !obj[key].is_number_integer())
        throw ValidationError(where + ": missing integer '" + key + "'");
    return obj[key].get<int>();
}

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
    if (!obj.is_object()) throw ValidationError(where + " must be an object");
    for (const auto& [k, v] : obj.items()) {
        bool ok = false;
        for (const char* key : keys) ok = ok || k == key;
        if (!ok) throw ValidationError(where + ": unknown key '" + k + "'");
    }
}

const json& array_at(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || !obj[key].is_array()) throw ValidationError(where + ": '" + key + "' must be an array");
    return obj[key];
}

BusKind bus_kind(const std::string& s, const std::string& where) {
    if (s == "slack") return BusKind::Slack;
    if (s == "pv") return BusKind::PV;
    if (s == "pq") return BusKind::PQ;
    throw ValidationError(where + ": bus type must be slack, pv or pq");
}

TransmissionCase parse_transmission(const json& j) {
    reject_unknown(j, {"name", "base_mva", "frequency", "buses", "branches", "generators", "boundary_buses"},
                   "transmission");
    TransmissionCase tc;
    tc.name = j.value("name", std::string("transmission"));
    tc.base_mva = number(j, "base_mva", 100.0);
    tc.frequency = number(j, "frequency", 60.0);
    for (const auto& b : array_at(j, "buses", "transmission")) {
        const std::string where = "transmission bus";
        reject_unknown(b, {"id", "type", "v", "angle_deg", "p_gen", "load"}, where);
        TransmissionBus bus;
        bus.id = required_int(b, "id", where);
        bus.kind = bus_kind(b.value("type", std::string("pq")), where + " " + std::to_string(bus.id));
        bus.v_set = number(b, "v", 1.0);
        bus.angle = number(b, "angle_deg", 0.0) * kPi / 180.0;
        bus.p_gen = number(b, "p_gen", 0.0);
        if (b.contains("load")) bus.load = complex_of(b["load"], "bus load");
        tc.buses.push_back(bus);
    }
    for (const auto& b : array_at(j, "branches", "transmission")) {
        const std::string where = "transmission branch";
        reject_unknown(b, {"from", "to", "z1", "b1", "z0", "b0", "tap"}, where);
        TransmissionBranch br;
        br.from = required_int(b, "from", where);
        br.to = required_int(b, "to", where);
        if (!b.contains("z1")) throw ValidationError(where + ": missing 'z1'");
        br.z1 = complex_of(b["z1"], "z1");
        br.b1 = Complex(0.0, number(b, "b1", 0.0));
        if (b.contains("z0")) br.z0 = complex_of(b["z0"], "z0");
        if (b.contains("b0")) br.b0 = Complex(0.0, b["b0"].get<double>());
        br.tap = number(b, "tap", 1.0);
        tc.branches.push_back(br);
    }
    for (const auto& g : array_at(j, "generators", "transmission")) {
        const std::string where = "generator";
        reject_unknown(g, {"bus", "xd_prime", "h", "damping", "x2", "x0"}, where);
        GeneratorSpec gen;
        gen.bus = required_int(g, "bus", where);
        gen.x_d_prime = required_number(g, "xd_prime", where);
        gen.h = required_number(g, "h", where);
        gen.damping = number(g, "damping", 0.0);
        if (g.contains("x2")) gen.x2 = g["x2"].get<double>();
        if (g.contains("x0")) gen.x0 = g["x0"].get<double>();
        tc.generators.push_back(gen);
    }
    if (j.contains("boundary_buses")) tc.boundary_buses = j["boundary_buses"].get<std::vector<int>>();
    return tc;
}

Mat3 segment_matrix(const json& s, const std::string& where) {
    if (s.contains("zabc")) {
        const auto& rows = s["zabc"];
        if (!rows.is_array() || rows.size() != 3) throw ValidationError(where + ": zabc must be 3x3");
        Mat3 z;
        for (int r = 0; r < 3; ++r) {
            if (!rows[r].is_array() || rows[r].size() != 3) throw ValidationError(where + ": zabc must be 3x3");
            for (int c = 0; c < 3; ++c) z(r, c) = complex_of(rows[r][c], "zabc entry");
        }
        return z;
    }
    if (!s.contains("z1")) throw ValidationError(where + ": needs 'zabc' or 'z1'");
    const Complex z1 = complex_of(s["z1"], "z1");
    const Complex z0 = s.contains("z0") ? complex_of(s["z0"], "z0") : z1;
    return sequence_impedance_to_phase_matrix({z0, z1, z1});
}

FeederSpec parse_feeder(const json& f) {
    reject_unknown(f, {"name", "boundary_bus", "head_bus", "z_share", "motor_share", "buses", "segments"}, "feeder");
    FeederSpec spec;
    spec.name = f.value("name", std::string("feeder"));
    const std::string where = "feeder " + spec.name;
    spec.boundary_bus = required_int(f, "boundary_bus", where);
    spec.head_bus = required_int(f, "head_bus", where);
    const double z_share = number(f, "z_share", 0.75);
    const double m_share = number(f, "motor_share", 0.25);
    for (const auto& b : array_at(f, "buses", where)) {
        reject_unknown(b, {"id", "load", "phase_loads", "z_share", "motor_share"}, where + " bus");
        FeederBus bus;
        bus.id = required_int(b, "id", where + " bus");
        const double zs = number(b, "z_share", z_share);
        const double ms = number(b, "motor_share", m_share);
        std::array<Complex, 3> s{};
        if (b.contains("phase_loads")) {
            const auto& pl = b["phase_loads"];
            if (!pl.is_array() || pl.size() != 3) throw ValidationError(where + ": phase_loads needs three entries");
            for (int p = 0; p < 3; ++p) s[static_cast<std::size_t>(p)] = complex_of(pl[p], "phase load");
        } else if (b.contains("load")) {
            const Complex total = complex_of(b["load"], "bus load");
            s = {total / 3.0, total / 3.0, total / 3.0};
        }
        for (std::size_t p = 0; p < 3; ++p) bus.load[p] = {s[p], zs, ms};
        spec.buses.push_back(bus);
    }
    for (const auto& s : array_at(f, "segments", where)) {
        reject_unknown(s, {"from", "to", "z1", "z0", "zabc"}, where + " segment");
        FeederSegment seg;
        seg.from = required_int(s, "from", where + " segment");
        seg.to = required_int(s, "to", where + " segment");
        seg.z = segment_matrix(s, where + " segment");
        spec.segments.push_back(seg);
    }
    return spec;
}

MotorParameters parse_motors(const json& m) {
    reject_unknown(m, {"v_stall", "stall_delay", "stall_multiplier", "stall_power_factor", "enabled"}, "motors");
    MotorParameters p;
    p.v_stall = number(m, "v_stall", p.v_stall);
    p.stall_delay = number(m, "stall_delay", p.stall_delay);
    p.stall_multiplier = number(m, "stall_multiplier", p.stall_multiplier);
    p.stall_power_factor = number(m, "stall_power_factor", p.stall_power_factor);
    p.enabled = m.value("enabled", true);
    return p;
}

}  // namespace

CoSimCase parse_case(const std::string& text) {
    const json j = parse_json(text);
    try {
        reject_unknown(j, {"name", "transmission", "feeders", "motors"}, "case");
        CoSimCase cs;
        if (!j.contains("transmission")) throw ValidationError("case: missing 'transmission'");
        cs.transmission = parse_transmission(j["transmission"]);
        if (j.contains("name")) cs.transmission.name = j["name"].get<std::string>();
        for (const auto& f : array_at(j, "feeders", "case")) cs.feeders.push_back(parse_feeder(f));
        if (j.contains("motors")) cs.motors = parse_motors(j["motors"]);
        return cs;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("case: ") + e.what());
    }
}

CoSimCase load_case(const std::filesystem::path& path) { return parse_case(read_file(path)); }

std::pair<InterfaceModelKind, SchemeKind> parse_reference(const std::string& text) {
    const auto dash = text.find('-');
    if (dash == std::string::npos) throw ValidationError("reference must look like im7-is6");
    return {parse_interface_model(text.substr(0, dash)), parse_scheme(text.substr(dash + 1))};
}

namespace {

template <class T, class F>
std::vector<T> parse_list(const json& j, F&& f) {
    std::vector<T> out;
    for (const auto& e : j) out.push_back(f(e.is_string() ? e.get<std::string>() : std::to_string(e.get<int>())));
    return out;
}

}  // namespace

ScenarioFile parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
    const json j = parse_json(text);
    try {
        reject_unknown(j,
                       {"name", "case", "im", "is", "beta", "dt", "t_end", "fault", "convergence", "interface", "monitors",
                        "matrix"},
                       "scenario");
        ScenarioFile out;
        Scenario& sc = out.scenario;
        sc.name = j.value("name", std::string("scenario"));
        if (j.contains("case")) out.case_path = base_dir / j["case"].get<std::string>();
        auto label = [](const json& v) { return v.is_string() ? v.get<std::string>() : std::to_string(v.get<int>()); };
        if (j.contains("im")) sc.im = parse_interface_model(label(j["im"]));
        if (j.contains("is")) sc.scheme = parse_scheme(label(j["is"]));
        sc.beta = number(j, "beta", sc.beta);
        sc.dt = number(j, "dt", sc.dt);
        sc.t_end = number(j, "t_end", sc.t_end);
        if (j.contains("fault") && !j["fault"].is_null()) {
            const auto& f = j["fault"];
            reject_unknown(f, {"bus", "onset", "duration", "admittance"}, "fault");
            FaultSpec fs;
            fs.node = required_int(f, "bus", "fault");
            fs.start = required_number(f, "onset", "fault");
            fs.clear = fs.start + required_number(f, "duration", "fault");
            if (f.contains("admittance"))
                fs.admittance = f["admittance"].is_array() ? complex_of(f["admittance"], "fault admittance")
                                                           : Complex(f["admittance"].get<double>(), 0.0);
            sc.fault = fs;
        }
        if (j.contains("convergence")) {
            const auto& c = j["convergence"];
            reject_unknown(c, {"tol_v", "tol_i", "max_iter", "abort_on_nonconvergence"}, "convergence");
            sc.convergence.tol_v = number(c, "tol_v", sc.convergence.tol_v);
            sc.convergence.tol_i = number(c, "tol_i", sc.convergence.tol_i);
            sc.convergence.max_iter = c.value("max_iter", sc.convergence.max_iter);
            sc.convergence.abort_on_nonconvergence = c.value("abort_on_nonconvergence", false);
        }
        if (j.contains("interface")) {
            const auto& i = j["interface"];
            reject_unknown(i, {"epsilon", "z_link", "voltage_floor"}, "interface");
            sc.interface.epsilon = number(i, "epsilon", sc.interface.epsilon);
            if (i.contains("z_link")) sc.interface.z_link = Mat3::Identity() * complex_of(i["z_link"], "z_link");
            sc.interface.voltage_floor = number(i, "voltage_floor", sc.interface.voltage_floor);
        }
        if (j.contains("monitors")) {
            const auto& m = j["monitors"];
            reject_unknown(m, {"v_pos_bus", "feeder_bus", "generator_bus"}, "monitors");
            sc.monitors.v_pos_bus = m.value("v_pos_bus", sc.monitors.v_pos_bus);
            sc.monitors.feeder_bus = m.value("feeder_bus", sc.monitors.feeder_bus);
            sc.monitors.generator_bus = m.value("generator_bus", sc.monitors.generator_bus);
        }
        if (j.contains("matrix")) {
            const auto& m = j["matrix"];
            reject_unknown(m, {"ims", "iss", "betas", "timing_reps", "reference"}, "matrix");
            BenchMatrix bm;
            bm.ims = parse_list<InterfaceModelKind>(array_at(m, "ims", "matrix"), parse_interface_model);
            bm.iss = parse_list<SchemeKind>(array_at(m, "iss", "matrix"), parse_scheme);
            if (m.contains("betas")) bm.betas = m["betas"].get<std::vector<double>>();
            bm.timing_reps = m.value("timing_reps", bm.timing_reps);
            if (bm.timing_reps < 1) throw ValidationError("matrix: timing_reps must be >= 1");
            if (m.contains("reference")) {
                const auto [im, is] = parse_reference(m["reference"].get<std::string>());
                bm.reference_im = im;
                bm.reference_is = is;
            }
            out.matrix = bm;
        }
        return out;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scenario: ") + e.what());
    }
}

ScenarioFile load_scenario(const std::filesystem::path& path) {
    return parse_scenario(read_file(path), path.parent_path());
}

}  // namespace tdcosim
