#ifndef LRW_PROTOCOL_HPP
#define LRW_PROTOCOL_HPP

#include "lrw/core.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <variant>
#include <vector>

// Initiator and neighbor state machines as pure (state, event) -> (state', actions)
// functions. The caller owns timers and transport; the machines only say what to do.
namespace lrw {

struct Send {
    Message msg;
    std::optional<NodeId> to; // nullopt: local broadcast
};
struct StartTimer {
    TimerKind kind;
    Micros duration;
};
struct StopTimer {
    TimerKind kind;
};
struct CommitWrites {
    NodeId initiator;
    OpId op_id = 0;
    std::vector<std::string> vars;
    std::vector<Value> values;
};
struct DiscardTentative {
    NodeId initiator;
    OpId op_id = 0;
};
struct Return {
    Outcome outcome;
};

using Action = std::variant<Send, StartTimer, StopTimer, CommitWrites, DiscardTentative, Return>;
using Actions = std::vector<Action>;

// Stale: belongs to an earlier operation. Stray: not addressed to this role at all.
enum class Disposition { Handled, Stale, Stray };

template <class State>
struct Transition {
    State state;
    Actions actions;
    Disposition disposition = Disposition::Handled;
};

enum class InitiatorMode { Idle, Active, Abort, AwaitCommitExpiry };

constexpr std::string_view to_string(InitiatorMode m)
{
    switch (m) {
    case InitiatorMode::Idle: return "Idle";
    case InitiatorMode::Active: return "Active";
    case InitiatorMode::Abort: return "Abort";
    case InitiatorMode::AwaitCommitExpiry: return "AwaitCommitExpiry";
    }
    return "?";
}

struct InitiatorState {
    NodeId self;
    InitiatorMode mode = InitiatorMode::Idle;
    OpId op_id = 0;
    std::set<NodeId> invitees;
    std::set<NodeId> responders;
    std::map<NodeId, Value> collected_r;
    std::map<TimerKind, SimTime> armed;
    SimTime commit_deadline{0};
    TimerConfig timers;
    std::shared_ptr<const LrwSpec> spec;

    InitiatorState() = default;
    explicit InitiatorState(NodeId id) : self(id) {}
};

struct Engagement {
    NodeId initiator;
    OpId op_id = 0;
    bool operator==(const Engagement&) const = default;
};

struct NeighborState {
    NodeId self;
    std::optional<Engagement> engaged;
    std::optional<SimTime> commit_deadline;
    Value accepted_r = 0;
    VarStore store;
    // Highest op per initiator this node has finished with (committed or discarded).
    std::map<NodeId, OpId> finished;

    NeighborState() = default;
    explicit NeighborState(NodeId id, VarStore s = {}) : self(id), store(std::move(s)) {}
};

namespace detail {

inline std::vector<NodeId> to_vector(const std::set<NodeId>& s) { return {s.begin(), s.end()}; }

inline Message init_message(const InitiatorState& s, std::vector<NodeId> invitees, Micros remaining)
{
    Message m;
    m.kind = MsgKind::InitMsg;
    m.initiator = s.self;
    m.sender = s.self;
    m.op_id = s.op_id;
    m.commit_remaining = remaining;
    m.invitees = std::move(invitees);
    if (s.spec)
        m.write_payload = s.spec->payload;
    return m;
}

inline Message abort_message(const InitiatorState& s)
{
    Message m;
    m.kind = MsgKind::AbortMsg;
    m.initiator = s.self;
    m.sender = s.self;
    m.op_id = s.op_id;
    return m;
}

inline Message reply(MsgKind kind, NodeId self, const Message& to, Value r = 0)
{
    Message m;
    m.kind = kind;
    m.initiator = to.initiator;
    m.sender = self;
    m.op_id = to.op_id;
    m.r_value = r;
    return m;
}

inline void arm(InitiatorState& s, Actions& out, TimerKind kind, Micros duration, SimTime now)
{
    s.armed[kind] = now + duration;
    out.emplace_back(StartTimer{kind, duration});
}

inline void disarm(InitiatorState& s, Actions& out, TimerKind kind)
{
    if (s.armed.erase(kind))
        out.emplace_back(StopTimer{kind});
}

inline void disarm_all(InitiatorState& s, Actions& out)
{
    for (TimerKind k : {TimerKind::Response, TimerKind::Timeout, TimerKind::Commit})
        disarm(s, out, k);
}

inline void enter_abort(InitiatorState& s, Actions& out, SimTime now)
{
    s.mode = InitiatorMode::Abort;
    s.responders.clear();
    out.emplace_back(Send{abort_message(s), std::nullopt});
    arm(s, out, TimerKind::Response, s.timers.response, now);
    if (s.timers.timeout)
        arm(s, out, TimerKind::Timeout, *s.timers.timeout, now);
}

inline void finish(InitiatorState& s, Actions& out, Outcome outcome)
{
    disarm_all(s, out);
    s.mode = InitiatorMode::Idle;
    out.emplace_back(Return{outcome});
}

} // namespace detail

// Starts an operation over `neighborhood`. The op id defaults to the next one
// after the state's current id; an explicit id must be larger than it.
inline Transition<InitiatorState> initiator_invoke(InitiatorState state, std::shared_ptr<const LrwSpec> spec,
                                                   const std::set<NodeId>& neighborhood, const TimerConfig& timers,
                                                   SimTime now, std::optional<OpId> op_id = std::nullopt)
{
    if (state.mode != InitiatorMode::Idle)
        throw Error(ErrorCode::AlreadyActive, "initiator " + to_string(state.self) + " is " +
                                                  std::string(to_string(state.mode)));
    if (neighborhood.empty())
        throw Error(ErrorCode::EmptyNeighborhood, "initiator " + to_string(state.self) + " has no neighbors");
    if (op_id && *op_id <= state.op_id)
        throw Error(ErrorCode::InvalidConfig, "op ids must increase per initiator");
    timers.validate();

    Transition<InitiatorState> t{std::move(state), {}};
    InitiatorState& s = t.state;
    s.mode = InitiatorMode::Active;
    s.op_id = op_id.value_or(s.op_id + 1);
    s.invitees = neighborhood;
    s.responders.clear();
    s.collected_r.clear();
    s.armed.clear();
    s.timers = timers;
    s.spec = std::move(spec);
    s.commit_deadline = now + timers.commit;

    if (timers.timeout)
        detail::arm(s, t.actions, TimerKind::Timeout, *timers.timeout, now);
    detail::arm(s, t.actions, TimerKind::Commit, timers.commit, now);
    t.actions.emplace_back(Send{detail::init_message(s, detail::to_vector(s.invitees), timers.commit), std::nullopt});
    detail::arm(s, t.actions, TimerKind::Response, timers.response, now);
    return t;
}

inline Transition<InitiatorState> initiator_on_message(InitiatorState state, const Message& msg, SimTime now)
{
    Transition<InitiatorState> t{std::move(state), {}};
    InitiatorState& s = t.state;
    if (msg.initiator != s.self || msg.sender == s.self) {
        t.disposition = Disposition::Stray;
        return t;
    }
    if (msg.op_id != s.op_id || s.mode == InitiatorMode::Idle || s.mode == InitiatorMode::AwaitCommitExpiry) {
        t.disposition = Disposition::Stale;
        return t;
    }
    if (!s.invitees.contains(msg.sender)) {
        t.disposition = Disposition::Stray;
        return t;
    }

    if (s.mode == InitiatorMode::Active) {
        switch (msg.kind) {
        case MsgKind::AcceptMsg:
            if (!s.responders.insert(msg.sender).second)
                return t; // duplicate accept
            s.collected_r[msg.sender] = msg.r_value;
            if (s.responders == s.invitees) {
                std::vector<Value> rs;
                rs.reserve(s.collected_r.size());
                for (const auto& [node, r] : s.collected_r)
                    rs.push_back(r);
                bool ok = !s.spec || !s.spec->aggregate || s.spec->aggregate(rs);
                if (ok) {
                    detail::disarm(s, t.actions, TimerKind::Response);
                    detail::disarm(s, t.actions, TimerKind::Timeout);
                    s.mode = InitiatorMode::AwaitCommitExpiry;
                    t.actions.emplace_back(Return{Outcome::Success});
                } else {
                    detail::enter_abort(s, t.actions, now);
                }
            }
            return t;
        case MsgKind::RejectMsg:
            detail::enter_abort(s, t.actions, now);
            return t;
        default:
            t.disposition = Disposition::Stray;
            return t;
        }
    }

    // Abort: only acks count; late accepts and rejects from the first phase are ignored.
    if (msg.kind != MsgKind::AbortAck)
        return t;
    s.responders.insert(msg.sender);
    if (s.responders == s.invitees)
        detail::finish(s, t.actions, Outcome::Canceled);
    return t;
}

inline Transition<InitiatorState> initiator_on_timer(InitiatorState state, TimerKind kind, SimTime now)
{
    Transition<InitiatorState> t{std::move(state), {}};
    InitiatorState& s = t.state;
    if (!s.armed.erase(kind)) {
        t.disposition = Disposition::Stray;
        return t;
    }

    switch (s.mode) {
    case InitiatorMode::Active:
        if (kind == TimerKind::Response) {
            std::vector<NodeId> missing;
            for (NodeId n : s.invitees)
                if (!s.responders.contains(n))
                    missing.push_back(n);
            t.actions.emplace_back(Send{detail::init_message(s, std::move(missing), s.commit_deadline - now), std::nullopt});
            detail::arm(s, t.actions, TimerKind::Response, s.timers.response, now);
        } else if (kind == TimerKind::Timeout) {
            detail::enter_abort(s, t.actions, now);
        } else {
            // Neighbors that accepted are committing now; nothing can be undone.
            detail::finish(s, t.actions, Outcome::Failed);
        }
        break;
    case InitiatorMode::Abort:
        if (kind == TimerKind::Response) {
            t.actions.emplace_back(Send{detail::abort_message(s), std::nullopt});
            detail::arm(s, t.actions, TimerKind::Response, s.timers.response, now);
        } else {
            detail::finish(s, t.actions, Outcome::Failed);
        }
        break;
    case InitiatorMode::AwaitCommitExpiry:
        if (kind == TimerKind::Commit) {
            if (s.spec && s.spec->self_write)
                t.actions.emplace_back(CommitWrites{s.self, s.op_id, s.spec->write_vars, *s.spec->self_write});
            s.mode = InitiatorMode::Idle;
        }
        break;
    case InitiatorMode::Idle:
        t.disposition = Disposition::Stray;
        break;
    }
    return t;
}

// `spec` is the operation description the neighbor evaluates for msg.initiator.
inline Transition<NeighborState> neighbor_on_message(NeighborState state, const Message& msg, const LrwSpec& spec,
                                                     SimTime now)
{
    Transition<NeighborState> t{std::move(state), {}};
    NeighborState& s = t.state;
    if (msg.sender == s.self || msg.initiator == s.self) {
        t.disposition = Disposition::Stray;
        return t;
    }
    const NodeId p = msg.initiator;

    if (msg.kind == MsgKind::InitMsg) {
        if (auto it = s.finished.find(p); it != s.finished.end() && msg.op_id <= it->second) {
            t.disposition = Disposition::Stale;
            return t;
        }
        if (!msg.names(s.self)) {
            t.disposition = Disposition::Stray;
            return t;
        }
        if (!s.engaged) {
            if (msg.commit_remaining.count() <= 0) {
                t.disposition = Disposition::Stale;
                return t;
            }
            Evaluation e = spec.evaluate ? spec.evaluate(s.store.snapshot(), msg.write_payload)
                                         : Evaluation{Response{0, msg.write_payload}};
            if (!e) {
                t.actions.emplace_back(Send{detail::reply(MsgKind::RejectMsg, s.self, msg), p});
                return t;
            }
            if (e->writes.size() != spec.write_vars.size())
                throw Error(ErrorCode::WriteArityMismatch, "evaluator returned " + std::to_string(e->writes.size()) +
                                                               " values for " +
                                                               std::to_string(spec.write_vars.size()) + " variables");
            s.store.stage(PendingWrite{spec.write_vars, std::move(e->writes), p, msg.op_id});
            s.engaged = Engagement{p, msg.op_id};
            s.commit_deadline = now + msg.commit_remaining;
            s.accepted_r = e->r;
            t.actions.emplace_back(StartTimer{TimerKind::Commit, msg.commit_remaining});
            t.actions.emplace_back(Send{detail::reply(MsgKind::AcceptMsg, s.self, msg, e->r), p});
            return t;
        }
        if (*s.engaged == Engagement{p, msg.op_id}) {
            t.actions.emplace_back(Send{detail::reply(MsgKind::AcceptMsg, s.self, msg, s.accepted_r), p});
            return t;
        }
        // Engaged elsewhere: concurrency reject.
        t.actions.emplace_back(Send{detail::reply(MsgKind::RejectMsg, s.self, msg), p});
        return t;
    }

    if (msg.kind == MsgKind::AbortMsg) {
        if (s.engaged && *s.engaged == Engagement{p, msg.op_id}) {
            const Engagement e = *s.engaged;
            s.store.discard();
            s.engaged.reset();
            s.commit_deadline.reset();
            s.finished[p] = std::max(s.finished[p], e.op_id);
            t.actions.emplace_back(StopTimer{TimerKind::Commit});
            t.actions.emplace_back(DiscardTentative{e.initiator, e.op_id});
        }
        t.actions.emplace_back(Send{detail::reply(MsgKind::AbortAck, s.self, msg), p});
        return t;
    }

    t.disposition = Disposition::Stray;
    return t;
}

inline Transition<NeighborState> neighbor_on_timer(NeighborState state, TimerKind kind, SimTime /*now*/)
{
    Transition<NeighborState> t{std::move(state), {}};
    NeighborState& s = t.state;
    if (kind != TimerKind::Commit || !s.engaged) {
        t.disposition = Disposition::Stray;
        return t;
    }
    const Engagement e = *s.engaged;
    PendingWrite w = *s.store.pending();
    s.store.commit();
    s.engaged.reset();
    s.commit_deadline.reset();
    s.finished[e.initiator] = std::max(s.finished[e.initiator], e.op_id);
    t.actions.emplace_back(CommitWrites{e.initiator, e.op_id, std::move(w.vars), std::move(w.values)});
    return t;
}

} // namespace lrw

#endif // LRW_PROTOCOL_HPP
