#include "gridpse/grid/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "gridpse/error.hpp"

namespace gridpse {

std::string to_string(BusKind kind) {
    switch (kind) {
        case BusKind::Slack: return "slack";
        case BusKind::Generator: return "generator";
        case BusKind::Load: return "load";
        case BusKind::ZeroInjection: return "zero-injection";
    }
    return "load";
}

BusKind bus_kind_from_string(const std::string& text) {
    if (text == "slack") return BusKind::Slack;
    if (text == "generator") return BusKind::Generator;
    if (text == "load") return BusKind::Load;
    if (text == "zero-injection") return BusKind::ZeroInjection;
    throw DataError("unknown bus kind '" + text + "'");
}

Network::Network(std::vector<Bus> buses, std::vector<Branch> branches, double base_mva)
    : buses_(std::move(buses)), branches_(std::move(branches)), base_mva_(base_mva) {
    index();
}

void Network::index() {
    bus_pos_.clear();
    branch_pos_.clear();
    for (std::size_t i = 0; i < buses_.size(); ++i) bus_pos_.emplace(buses_[i].id, i);
    for (std::size_t i = 0; i < branches_.size(); ++i) branch_pos_.emplace(branches_[i].id, i);

    incidence_.assign(buses_.size(), {});
    for (std::size_t e = 0; e < branches_.size(); ++e) {
        const auto& br = branches_[e];
        if (!br.in_service) continue;
        auto f = bus_pos_.find(br.from);
        auto t = bus_pos_.find(br.to);
        if (f != bus_pos_.end()) incidence_[f->second].push_back(e);
        if (t != bus_pos_.end() && br.to != br.from) incidence_[t->second].push_back(e);
    }
}

std::optional<std::size_t> Network::find_bus(int id) const {
    auto it = bus_pos_.find(id);
    if (it == bus_pos_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> Network::find_branch(int id) const {
    auto it = branch_pos_.find(id);
    if (it == branch_pos_.end()) return std::nullopt;
    return it->second;
}

std::size_t Network::bus_position(int id) const {
    if (auto pos = find_bus(id)) return *pos;
    throw DataError("unknown bus id " + std::to_string(id));
}

std::size_t Network::branch_position(int id) const {
    if (auto pos = find_branch(id)) return *pos;
    throw DataError("unknown branch id " + std::to_string(id));
}

std::size_t Network::slack_position() const {
    std::optional<std::size_t> slack;
    for (std::size_t i = 0; i < buses_.size(); ++i) {
        if (buses_[i].kind != BusKind::Slack) continue;
        if (slack) throw DataError("more than one slack bus");
        slack = i;
    }
    if (!slack) throw DataError("missing slack bus");
    return *slack;
}

Network Network::scaled(double factor) const {
    auto buses = buses_;
    for (auto& b : buses) {
        b.p_load *= factor;
        b.q_load *= factor;
        b.p_gen *= factor;
    }
    return Network(std::move(buses), branches_, base_mva_);
}

bool is_zero_injection(const Bus& bus) {
    return bus.kind != BusKind::Slack && bus.kind != BusKind::Generator && bus.p_load == 0.0 &&
           bus.q_load == 0.0 && bus.p_gen == 0.0 && bus.g_shunt == 0.0 && bus.b_shunt == 0.0;
}

void mark_zero_injection(std::vector<Bus>& buses) {
    for (auto& b : buses) {
        if (b.kind == BusKind::ZeroInjection && !is_zero_injection(b)) b.kind = BusKind::Load;
        if (is_zero_injection(b)) b.kind = BusKind::ZeroInjection;
    }
}

Admittance series_admittance(double r, double x) {
    const double d = r * r + x * x;
    if (d == 0.0) throw DataError("branch with zero impedance");
    return {r / d, -x / d};
}

std::vector<std::string> validate(const Network& network) {
    std::vector<std::string> out;
    const auto& buses = network.buses();
    const auto& branches = network.branches();

    if (!(network.base_mva() > 0.0)) out.push_back("base MVA must be positive");

    std::set<int> ids;
    int slack_count = 0;
    for (const auto& b : buses) {
        if (!ids.insert(b.id).second) out.push_back("duplicate bus id " + std::to_string(b.id));
        if (b.kind == BusKind::Slack) ++slack_count;
        if (!(b.base_kv > 0.0)) out.push_back("bus " + std::to_string(b.id) + ": base voltage must be positive");
        if (b.kind == BusKind::ZeroInjection && !is_zero_injection(b))
            out.push_back("bus " + std::to_string(b.id) + ": zero-injection bus carries load, generation, or shunt");
    }
    if (slack_count == 0) out.push_back("missing slack bus");
    if (slack_count > 1) out.push_back("more than one slack bus");

    std::set<int> branch_ids;
    for (const auto& br : branches) {
        const std::string name = "branch " + std::to_string(br.id);
        if (!branch_ids.insert(br.id).second) out.push_back("duplicate " + name);
        if (br.from == br.to) out.push_back(name + ": from-bus equals to-bus");
        if (!network.find_bus(br.from) || !network.find_bus(br.to))
            out.push_back(name + ": endpoint does not exist");
        if (br.g < 0.0) out.push_back(name + ": negative series conductance");
    }

    // Connectivity over in-service branches.
    if (!buses.empty()) {
        std::vector<char> seen(buses.size(), 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            auto k = stack.back();
            stack.pop_back();
            for (auto e : network.incidence()[k]) {
                const auto& br = branches[e];
                for (int other : {br.from, br.to}) {
                    auto pos = network.find_bus(other);
                    if (pos && !seen[*pos]) {
                        seen[*pos] = 1;
                        stack.push_back(*pos);
                    }
                }
            }
        }
        std::size_t reached = std::count(seen.begin(), seen.end(), 1);
        if (reached != buses.size()) {
            std::ostringstream msg;
            msg << "network is disconnected: " << reached << " of " << buses.size()
                << " buses reachable from bus " << buses[0].id;
            out.push_back(msg.str());
        }
    }
    return out;
}

void require_valid(const Network& network) {
    auto violations = validate(network);
    if (violations.empty()) return;
    std::string msg = "invalid network:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw DataError(msg);
}

std::string to_string(ParameterTarget target) {
    switch (target) {
        case ParameterTarget::BranchSusceptance: return "branch-susceptance";
        case ParameterTarget::BranchConductance: return "branch-conductance";
        case ParameterTarget::ShuntSusceptance: return "shunt-susceptance";
    }
    return "branch-susceptance";
}

ParameterTarget parameter_target_from_string(const std::string& text) {
    if (text == "branch-susceptance") return ParameterTarget::BranchSusceptance;
    if (text == "branch-conductance") return ParameterTarget::BranchConductance;
    if (text == "shunt-susceptance") return ParameterTarget::ShuntSusceptance;
    throw DataError("unknown parameter target '" + text + "'");
}

double parameter_value(const Network& network, const UnknownParameter& p) {
    switch (p.target) {
        case ParameterTarget::BranchSusceptance: return network.branch(p.element).b;
        case ParameterTarget::BranchConductance: return network.branch(p.element).g;
        case ParameterTarget::ShuntSusceptance: return network.bus(p.element).b_shunt;
    }
    return 0.0;
}

std::vector<std::string> validate(const Network& network, const UnknownParameterSet& unknowns) {
    std::vector<std::string> out;
    std::set<std::pair<int, int>> seen;
    for (const auto& p : unknowns) {
        const std::string name = to_string(p.target) + " " + std::to_string(p.element);
        if (!seen.emplace(static_cast<int>(p.target), p.element).second)
            out.push_back("unknown parameter listed twice: " + name);
        if (p.target == ParameterTarget::ShuntSusceptance) {
            if (!network.find_bus(p.element)) out.push_back("unknown parameter references absent bus: " + name);
        } else {
            auto pos = network.find_branch(p.element);
            if (!pos)
                out.push_back("unknown parameter references absent branch: " + name);
            else if (!network.branches()[*pos].in_service)
                out.push_back("unknown parameter on out-of-service branch: " + name);
        }
    }
    return out;
}

UnknownParameterSet unknown_susceptances(const Network& network, const std::vector<int>& branch_ids) {
    UnknownParameterSet out;
    for (int id : branch_ids)
        out.push_back({ParameterTarget::BranchSusceptance, id, network.branch(id).b});
    return out;
}

UnknownParameterSet unknown_shunts(const Network& network, const std::vector<int>& bus_ids) {
    UnknownParameterSet out;
    for (int id : bus_ids) out.push_back({ParameterTarget::ShuntSusceptance, id, network.bus(id).b_shunt});
    return out;
}

}  // namespace gridpse
