#include "gridpse/grid/matpower.hpp"

#include <charconv>
#include <limits>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "gridpse/error.hpp"

namespace gridpse {
namespace {

struct Row {
    std::size_t line;
    std::vector<double> values;
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<double> parse_numbers(std::string_view text, std::size_t line) {
    std::vector<double> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == ',' || text[i] == '\r')) ++i;
        if (i >= text.size()) break;
        std::size_t j = i;
        while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != ',' && text[j] != '\r') ++j;
        std::string_view tok = text.substr(i, j - i);
        double v = 0.0;
        if (tok == "Inf" || tok == "inf")
            v = std::numeric_limits<double>::infinity();
        else if (tok == "-Inf" || tok == "-inf")
            v = -std::numeric_limits<double>::infinity();
        else {
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc() || ptr != tok.data() + tok.size())
                throw ParseError("non-numeric field '" + std::string(tok) + "'", line);
        }
        out.push_back(v);
        i = j;
    }
    return out;
}

// Splits the text into `mpc.<name> = [ ... ];` tables and scalar assignments.
struct Document {
    std::map<std::string, std::vector<Row>> tables;
    std::map<std::string, double> scalars;
};

Document tokenize(std::string_view text) {
    Document doc;
    std::string current_table;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;

        if (auto c = line.find('%'); c != std::string_view::npos) line = line.substr(0, c);
        line = trim(line);
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }

        if (current_table.empty()) {
            if (line.rfind("mpc.", 0) != 0) continue;
            auto eq = line.find('=');
            if (eq == std::string_view::npos) continue;
            std::string name(trim(line.substr(4, eq - 4)));
            std::string_view rhs = trim(line.substr(eq + 1));
            if (!rhs.empty() && rhs.front() == '[') {
                current_table = name;
                doc.tables[name];
                line = trim(rhs.substr(1));
                if (line.empty()) continue;
            } else {
                if (!rhs.empty() && rhs.back() == ';') rhs.remove_suffix(1);
                rhs = trim(rhs);
                if (rhs.empty() || rhs.front() == '\'') continue;
                auto vals = parse_numbers(rhs, line_no);
                if (vals.size() != 1) throw ParseError("expected scalar for mpc." + name, line_no);
                doc.scalars[name] = vals[0];
                continue;
            }
        }

        // Inside a table: rows end with ';' or newline; ']' closes the table.
        bool closes = false;
        if (auto br = line.find(']'); br != std::string_view::npos) {
            closes = true;
            line = trim(line.substr(0, br));
        }
        std::size_t start = 0;
        while (start <= line.size()) {
            auto semi = line.find(';', start);
            std::string_view piece = trim(line.substr(start, semi == std::string_view::npos ? line.npos : semi - start));
            if (!piece.empty()) doc.tables[current_table].push_back({line_no, parse_numbers(piece, line_no)});
            if (semi == std::string_view::npos) break;
            start = semi + 1;
        }
        if (closes) current_table.clear();
        if (end == text.size()) break;
    }
    if (!current_table.empty()) throw ParseError("unterminated table mpc." + current_table, line_no);
    return doc;
}

void require_columns(const Row& row, std::size_t n, const char* table) {
    if (row.values.size() < n)
        throw ParseError(std::string(table) + " row has " + std::to_string(row.values.size()) +
                             " columns, expected at least " + std::to_string(n),
                         row.line);
}

int as_id(double v, std::size_t line) {
    if (v != static_cast<double>(static_cast<int>(v))) throw ParseError("non-integer id", line);
    return static_cast<int>(v);
}

}  // namespace

Network parse_matpower(std::string_view text) {
    Document doc = tokenize(text);
    double base = 100.0;
    if (auto it = doc.scalars.find("baseMVA"); it != doc.scalars.end()) base = it->second;
    if (!(base > 0.0)) throw DataError("baseMVA must be positive");

    auto bus_it = doc.tables.find("bus");
    auto branch_it = doc.tables.find("branch");
    if (bus_it == doc.tables.end()) throw ParseError("missing mpc.bus table");
    if (branch_it == doc.tables.end()) throw ParseError("missing mpc.branch table");

    std::vector<Bus> buses;
    std::map<int, std::size_t> pos;
    for (const auto& row : bus_it->second) {
        require_columns(row, 13, "bus");
        const auto& v = row.values;
        Bus b;
        b.id = as_id(v[0], row.line);
        const int type = as_id(v[1], row.line);
        switch (type) {
            case 1: b.kind = BusKind::Load; break;
            case 2: b.kind = BusKind::Generator; break;
            case 3: b.kind = BusKind::Slack; break;
            default: throw ParseError("unsupported bus type " + std::to_string(type), row.line);
        }
        b.p_load = v[2] / base;
        b.q_load = v[3] / base;
        b.g_shunt = v[4] / base;
        b.b_shunt = v[5] / base;
        b.v_set = v[7];
        b.base_kv = v[9] > 0.0 ? v[9] : 1.0;
        if (!pos.emplace(b.id, buses.size()).second)
            throw DataError("duplicate bus id " + std::to_string(b.id) + " (line " + std::to_string(row.line) + ")");
        buses.push_back(b);
    }

    std::vector<char> has_gen(buses.size(), 0);
    if (auto gen_it = doc.tables.find("gen"); gen_it != doc.tables.end()) {
        for (const auto& row : gen_it->second) {
            require_columns(row, 8, "gen");
            const auto& v = row.values;
            auto it = pos.find(as_id(v[0], row.line));
            if (it == pos.end()) throw ParseError("generator at unknown bus", row.line);
            if (v[7] <= 0.0) continue;
            auto& b = buses[it->second];
            b.p_gen += v[1] / base;
            b.v_set = v[5];
            has_gen[it->second] = 1;
        }
    }
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].kind == BusKind::Generator && !has_gen[i]) buses[i].kind = BusKind::Load;
    mark_zero_injection(buses);

    std::vector<Branch> branches;
    int next_id = 1;
    for (const auto& row : branch_it->second) {
        require_columns(row, 11, "branch");
        const auto& v = row.values;
        Branch br;
        br.id = next_id++;
        br.from = as_id(v[0], row.line);
        br.to = as_id(v[1], row.line);
        if (!pos.count(br.from) || !pos.count(br.to)) throw ParseError("branch references unknown bus", row.line);
        if (v[2] == 0.0 && v[3] == 0.0) throw ParseError("branch with zero impedance", row.line);
        auto y = series_admittance(v[2], v[3]);
        br.g = y.g;
        br.b = y.b;
        br.charging = v[4];
        br.in_service = v[10] > 0.0;
        branches.push_back(br);
    }

    Network net(std::move(buses), std::move(branches), base);
    require_valid(net);
    return net;
}

Network parse_matpower(std::istream& in) {
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_matpower(ss.str());
}

Network load_matpower_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open case file '" + path + "'");
    return parse_matpower(in);
}

}  // namespace gridpse
