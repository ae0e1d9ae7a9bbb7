#ifndef LRW_CONSENSUS_HPP
#define LRW_CONSENSUS_HPP

#include "lrw/core.hpp"

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace lrw {

// Sentinel for "never written"; distinct from every admissible input.
inline constexpr Value kOmega = std::numeric_limits<Value>::min();

struct ConsensusNode {
    Value input = 0;
    std::optional<Value> decision; // nullopt is the initial omega
    int decision_writes = 0;
    std::size_t pc = 0; // next step of this node's program

    void decide(Value v)
    {
        ++decision_writes;
        if (!decision)
            decision = v;
    }
};

// A step protocol for the explorer: each node runs a fixed program whose steps
// are atomic, and a schedule is any interleaving of those programs.
template <class P>
concept StepProtocol = requires(const P& p, const typename P::State& s, std::size_t i) {
    typename P::State;
    { p.initial() } -> std::same_as<typename P::State>;
    { p.enabled(s) } -> std::same_as<std::vector<std::size_t>>;
    { p.step(s, i) } -> std::same_as<typename P::State>;
    { p.nodes(s) } -> std::convertible_to<const std::vector<ConsensusNode>&>;
};

struct ExplorationResult {
    std::set<std::vector<std::optional<Value>>> decision_vectors;
    std::size_t schedules = 0;
    bool write_once = true;
    std::size_t longest_schedule = 0;
};

// Depth-first over every schedule. Throws StateSpaceExceeded when a schedule
// runs past `max_steps` or more than `max_schedules` schedules exist.
template <StepProtocol P>
ExplorationResult explore_interleavings(const P& protocol, std::size_t max_steps = 64,
                                        std::size_t max_schedules = 1'000'000)
{
    ExplorationResult out;
    struct Frame {
        typename P::State state;
        std::size_t depth;
    };
    std::vector<Frame> stack{{protocol.initial(), 0}};
    while (!stack.empty()) {
        Frame f = std::move(stack.back());
        stack.pop_back();
        const auto& nodes = protocol.nodes(f.state);
        for (const auto& n : nodes)
            if (n.decision_writes > 1)
                out.write_once = false;
        const auto next = protocol.enabled(f.state);
        if (next.empty()) {
            if (++out.schedules > max_schedules)
                throw Error(ErrorCode::StateSpaceExceeded, "more than " + std::to_string(max_schedules) + " schedules");
            std::vector<std::optional<Value>> d;
            for (const auto& n : nodes)
                d.push_back(n.decision);
            out.decision_vectors.insert(std::move(d));
            out.longest_schedule = std::max(out.longest_schedule, f.depth);
            continue;
        }
        if (f.depth >= max_steps)
            throw Error(ErrorCode::StateSpaceExceeded, "schedule longer than " + std::to_string(max_steps) + " steps");
        for (auto it = next.rbegin(); it != next.rend(); ++it)
            stack.push_back(Frame{protocol.step(f.state, *it), f.depth + 1});
    }
    return out;
}

// Runs one explicit schedule (node indices) and returns the decisions.
template <StepProtocol P>
std::vector<std::optional<Value>> run_schedule(const P& protocol, const std::vector<std::size_t>& schedule)
{
    auto state = protocol.initial();
    for (std::size_t i : schedule) {
        const auto en = protocol.enabled(state);
        if (std::find(en.begin(), en.end(), i) == en.end())
            throw Error(ErrorCode::InvalidConfig, "node " + std::to_string(i) + " has no step left");
        state = protocol.step(state, i);
    }
    std::vector<std::optional<Value>> out;
    for (const auto& n : protocol.nodes(state))
        out.push_back(n.decision);
    return out;
}

struct ConsensusVerdict {
    bool agreement = true;
    bool validity = true;
    bool termination = true;
    bool write_once = true;
    bool ok() const { return agreement && validity && termination && write_once; }
};

inline ConsensusVerdict verify_consensus(const ExplorationResult& r, const std::vector<Value>& inputs)
{
    ConsensusVerdict v;
    v.write_once = r.write_once;
    for (const auto& d : r.decision_vectors) {
        std::set<Value> seen;
        for (const auto& x : d) {
            if (!x) {
                v.termination = false;
                continue;
            }
            seen.insert(*x);
            if (std::find(inputs.begin(), inputs.end(), *x) == inputs.end())
                v.validity = false;
        }
        if (seen.size() > 1)
            v.agreement = false;
    }
    return v;
}

// LRW consensus on a clique of 2 or 3 nodes. Every node holds a record `d`
// (initially omega). Program of node i:
//   1. LRW over its neighborhood: each neighbor's f returns r = its d and
//      proposes B = d if already set, else the initiator's input; the
//      initiator writes the same value to its own record, g requires all r
//      to agree. Once any LRW has committed, every record holds its value.
//   2. decide its own record.
class LrwConsensus {
public:
    struct State {
        std::vector<ConsensusNode> nodes;
        std::vector<VarStore> stores;
    };

    explicit LrwConsensus(std::vector<Value> inputs) : inputs_(std::move(inputs))
    {
        if (inputs_.empty() || inputs_.size() > 3)
            throw Error(ErrorCode::InvalidConfig, "LRW consensus runs on 1 to 3 nodes");
        spec_.read_vars = {"d"};
        spec_.write_vars = {"d"};
        spec_.evaluate = [](const VarSnapshot& snap, std::span<const Value> payload) -> Evaluation {
            const Value d = snap.at("d");
            return Response{d, {d != kOmega ? d : payload[0]}};
        };
        spec_.aggregate = [](std::span<const Value> rs) {
            for (Value r : rs)
                if (r != rs.front())
                    return false;
            return true;
        };
    }

    State initial() const
    {
        State s;
        for (Value x : inputs_) {
            s.nodes.push_back(ConsensusNode{x, std::nullopt, 0, 0});
            VarStore store;
            store.set("d", kOmega);
            s.stores.push_back(std::move(store));
        }
        return s;
    }

    std::vector<std::size_t> enabled(const State& s) const
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < s.nodes.size(); ++i)
            if (s.nodes[i].pc < 2)
                out.push_back(i);
        return out;
    }

    State step(State s, std::size_t i) const
    {
        ConsensusNode& me = s.nodes[i];
        if (me.pc == 0) {
            const Value payload[] = {me.input};
            std::vector<Value> rs;
            std::vector<std::pair<std::size_t, Response>> staged;
            for (std::size_t q = 0; q < s.nodes.size(); ++q) {
                if (q == i)
                    continue;
                auto resp = spec_.evaluate(s.stores[q].snapshot(), payload);
                rs.push_back(resp->r);
                staged.emplace_back(q, *resp);
            }
            if (spec_.aggregate(rs)) {
                for (auto& [q, resp] : staged)
                    s.stores[q].set("d", resp.writes[0]);
                const Value own = s.stores[i].read_or("d", kOmega);
                const Value chosen = !staged.empty() ? staged.front().second.writes[0] : (own != kOmega ? own : me.input);
                s.stores[i].set("d", chosen);
            }
        } else {
            me.decide(s.stores[i].read_or("d", kOmega));
        }
        ++me.pc;
        return s;
    }

    const std::vector<ConsensusNode>& nodes(const State& s) const { return s.nodes; }

private:
    std::vector<Value> inputs_;
    LrwSpec spec_;
};

// Write-all consensus for two mutual neighbors p (index 0) and q (index 1),
// with variables u, v, w at both nodes, all initially omega. A write-all also
// writes the writer's own copy and may carry several variables.
//   p: write-all u := x_p, v := x_p; then decide x_p if w = omega or
//      v != x_p, otherwise decide w.
//   q: write-all v := x_q, w := x_q; then decide x_q if u = omega or
//      v != x_q, otherwise decide u.
// v is overwritten by whichever writer goes second, so a node that finds its
// own input in v while the other side has written knows it went second.
class WriteAllUvwConsensus {
public:
    struct State {
        std::vector<ConsensusNode> nodes;
        std::vector<VarStore> stores;
    };

    WriteAllUvwConsensus(Value p_input, Value q_input) : inputs_{p_input, q_input} {}

    State initial() const
    {
        State s;
        for (Value x : inputs_) {
            s.nodes.push_back(ConsensusNode{x, std::nullopt, 0, 0});
            VarStore store;
            for (const char* var : {"u", "v", "w"})
                store.set(var, kOmega);
            s.stores.push_back(std::move(store));
        }
        return s;
    }

    std::vector<std::size_t> enabled(const State& s) const
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < 2; ++i)
            if (s.nodes[i].pc < 2)
                out.push_back(i);
        return out;
    }

    State step(State s, std::size_t i) const
    {
        ConsensusNode& me = s.nodes[i];
        const bool is_p = i == 0;
        if (me.pc == 0) {
            for (auto& store : s.stores) {
                store.set(is_p ? "u" : "w", me.input);
                store.set("v", me.input);
            }
        } else {
            const VarStore& local = s.stores[i];
            const Value other = local.read_or(is_p ? "w" : "u", kOmega);
            if (other == kOmega || local.read_or("v", kOmega) != me.input)
                me.decide(me.input);
            else
                me.decide(other);
        }
        ++me.pc;
        return s;
    }

    const std::vector<ConsensusNode>& nodes(const State& s) const { return s.nodes; }

private:
    std::vector<Value> inputs_;
};

inline ExplorationResult consensus_lrw(const std::vector<Value>& inputs)
{
    return explore_interleavings(LrwConsensus(inputs));
}

inline ExplorationResult consensus_writeall_uvw(Value p_input, Value q_input)
{
    return explore_interleavings(WriteAllUvwConsensus(p_input, q_input));
}

} // namespace lrw

#endif // LRW_CONSENSUS_HPP
