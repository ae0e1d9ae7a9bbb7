#ifndef LRW_SIMNET_HPP
#define LRW_SIMNET_HPP

#include "lrw/core.hpp"
#include "lrw/network.hpp"
#include "lrw/protocol.hpp"
#include "lrw/rng.hpp"
#include "lrw/topology.hpp"
#include "lrw/trace.hpp"

#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace lrw {

enum class Transport { Broadcast, Unicast };

constexpr std::string_view to_string(Transport t) { return t == Transport::Broadcast ? "broadcast" : "unicast"; }

enum class TopologyKind { Star, Clique, Line, Line31 };

struct TopologySpec {
    TopologyKind kind = TopologyKind::Star;
    std::size_t size = 6;   // leaves for Star, nodes for Clique and Line
    std::size_t radius = 3; // Line only
    Churn churn;

    Topology build() const
    {
        switch (kind) {
        case TopologyKind::Star: return Topology::star(size);
        case TopologyKind::Clique: return Topology::clique(size);
        case TopologyKind::Line: return Topology::line(size, radius);
        case TopologyKind::Line31: return paper_topology_31();
        }
        return {};
    }
};

enum class InitiatorSelect { Center, EverySixth, All, RoundRobin, List };

struct InitiatorSpec {
    InitiatorSelect select = InitiatorSelect::Center;
    std::vector<NodeId> list;

    // Initiators invoked together in series `trial`.
    std::vector<NodeId> resolve(const Topology& topo, std::size_t trial) const
    {
        switch (select) {
        case InitiatorSelect::Center: return {topo.nodes().front()};
        case InitiatorSelect::EverySixth: {
            std::vector<NodeId> out;
            for (NodeId n : topo.nodes())
                if (n.value % 6 == 1)
                    out.push_back(n);
            return out;
        }
        case InitiatorSelect::All: return topo.nodes();
        case InitiatorSelect::RoundRobin: return {topo.nodes()[trial % topo.nodes().size()]};
        case InitiatorSelect::List: return list;
        }
        return {};
    }

    std::size_t per_series(const Topology& topo) const { return resolve(topo, 0).size(); }
};

struct ScenarioConfig {
    std::string name = "scenario";
    TopologySpec topology;
    InitiatorSpec initiators;
    TimerConfig timers;
    RadioModel radio;
    Transport transport = Transport::Broadcast;
    std::size_t trials = 1;
    std::uint64_t seed = 1;
    // Idle time appended after the Commit window so consecutive series never overlap.
    Micros trial_gap = from_ms(500);
    bool strict_payload = false;
    // Null selects an accept-all spec writing payload {1} to variable "v".
    std::shared_ptr<const LrwSpec> spec;
    std::function<VarStore(NodeId)> initial_store;
    // Forces a drop of (from -> to) in the given series, on top of random loss.
    std::function<bool(std::size_t series, NodeId from, NodeId to, const Message&)> drop_filter;
    unsigned threads = 1;

    Micros trial_span() const { return timers.commit + trial_gap; }

    void validate() const
    {
        timers.validate();
        radio.validate();
        if (!(topology.churn.up_fraction > 0.0 && topology.churn.up_fraction <= 1.0) ||
            topology.churn.flip_rate_hz < 0.0)
            throw Error(ErrorCode::InvalidConfig, "churn needs up_fraction in (0,1] and a non-negative rate");
        if (trial_gap.count() < 0)
            throw Error(ErrorCode::InvalidConfig, "trial gap must be non-negative");
        if (spec) {
            if (auto err = validate_spec(*spec, strict_payload))
                throw Error(*err, "scenario spec rejected");
        }
    }

    std::shared_ptr<const LrwSpec> effective_spec() const
    {
        if (spec)
            return spec;
        static const auto fallback = std::make_shared<const LrwSpec>(make_accept_all_spec({"v"}, {1}));
        return fallback;
    }
};

struct NodeRuntime {
    InitiatorState initiator;
    NeighborState neighbor;
};

// One series of LRW operations on one network instance.
class LrwSimulation {
public:
    static constexpr int kInvokeTag = 0;
    static constexpr int kChurnTagBase = 1000;

    LrwSimulation(const ScenarioConfig& cfg, Topology topo, Rng radio_rng, std::uint64_t series, Trace* trace)
        : cfg_(cfg)
        , spec_(cfg.effective_spec())
        , net_(std::move(topo), cfg.radio, std::move(radio_rng), trace)
        , trace_(trace)
    {
        net_.set_series(series);
        if (cfg.drop_filter) {
            net_.set_drop_filter([f = cfg.drop_filter, series](NodeId from, NodeId to, const Message& m) {
                return f(series, from, to, m);
            });
        }
        for (NodeId n : net_.topology().nodes()) {
            NodeRuntime rt{InitiatorState{n}, NeighborState{n, cfg.initial_store ? cfg.initial_store(n) : VarStore{}}};
            nodes_.emplace(n, std::move(rt));
        }
    }

    Network<Message>& network() { return net_; }
    const NodeRuntime& node(NodeId n) const { return nodes_.at(n); }

    // Schedules one simultaneous invocation per initiator at `at`. Op ids are
    // first_op, first_op + 1, ... in the order given.
    void trigger_series(const std::vector<NodeId>& initiators, SimTime at, OpId first_op)
    {
        for (NodeId p : initiators)
            if (nodes_.at(p).initiator.mode != InitiatorMode::Idle || pending_invoke_.contains(p))
                throw Error(ErrorCode::InitiatorBusy, "initiator " + to_string(p) + " is busy");
        OpId op = first_op;
        for (NodeId p : initiators) {
            pending_invoke_[p] = op++;
            net_.schedule(at, p, kInvokeTag);
        }
    }

    // Starts the link flip process; flips stop being scheduled after `horizon`.
    void start_churn(const Churn& churn, Rng rng, SimTime horizon)
    {
        if (churn.flip_rate_hz <= 0.0)
            return;
        churn_ = churn;
        churn_rng_ = std::move(rng);
        churn_horizon_ = horizon;
        links_ = net_.topology().potential_links();
        for (std::size_t i = 0; i < links_.size(); ++i)
            schedule_flip(i);
    }

    void run()
    {
        while (auto ev = net_.next()) {
            std::visit([this](auto& e) { handle(e); }, *ev);
        }
    }

    SimTime now() const { return net_.now(); }

private:
    static int timer_key(bool initiator_role, TimerKind k) { return (initiator_role ? 0 : 10) + static_cast<int>(k); }

    void schedule_flip(std::size_t i)
    {
        auto [a, b] = links_[i];
        const bool up = net_.topology().is_up(a, b);
        const double rate = churn_.flip_rate_hz * (up ? 1.0 - churn_.up_fraction : churn_.up_fraction);
        if (rate <= 0.0)
            return;
        const SimTime at = net_.now() + from_ms(churn_rng_.exponential(rate) * 1000.0);
        if (at <= churn_horizon_)
            net_.schedule(at, a, kChurnTagBase + static_cast<int>(i));
    }

    void handle(Wakeup& w)
    {
        if (w.tag >= kChurnTagBase) {
            const std::size_t i = static_cast<std::size_t>(w.tag - kChurnTagBase);
            auto [a, b] = links_[i];
            net_.topology().set_link(a, b, !net_.topology().is_up(a, b));
            schedule_flip(i);
            return;
        }
        const NodeId p = w.node;
        const OpId op = pending_invoke_.at(p);
        pending_invoke_.erase(p);
        const std::set<NodeId> nbhd = net_.topology().neighbors(p);
        if (cfg_.strict_payload && spec_->payload_bytes > kMaxPayloadBytes)
            throw Error(ErrorCode::PayloadTooLarge, "InitMsg payload exceeds " + std::to_string(kMaxPayloadBytes));
        auto t = initiator_invoke(nodes_.at(p).initiator, spec_, nbhd, cfg_.timers, net_.now(), op);
        add(TraceRecord{net_.now(), p, RecordKind::Invoke, p, op, "", std::nullopt, 0,
                        static_cast<std::int64_t>(nbhd.size()), net_.series()});
        nodes_.at(p).initiator = std::move(t.state);
        apply_initiator(p, t.actions);
    }

    void handle(Delivery<Message>& d) { dispatch(d.to, d.msg, d.unicast && cfg_.radio.unicast_hw_ack); }

    void handle(AckFrame<Message>& a)
    {
        if (cfg_.transport != Transport::Unicast)
            return;
        // The ack frame stands in for the reply the neighbor would otherwise send.
        Message reply;
        reply.initiator = a.msg.initiator;
        reply.sender = a.from;
        reply.op_id = a.msg.op_id;
        if (a.msg.kind == MsgKind::InitMsg)
            reply.kind = MsgKind::AcceptMsg;
        else if (a.msg.kind == MsgKind::AbortMsg)
            reply.kind = MsgKind::AbortAck;
        else
            return;
        dispatch(a.to, reply, false);
    }

    void handle(TimerExpiry& e)
    {
        const bool initiator_role = e.key < 10;
        const auto kind = static_cast<TimerKind>(e.key % 10);
        NodeRuntime& rt = nodes_.at(e.node);
        if (initiator_role) {
            add(TraceRecord{net_.now(), e.node, RecordKind::TimerFire, e.node, rt.initiator.op_id,
                            std::string(to_string(kind)), std::nullopt, 0, 0, net_.series()});
            auto t = initiator_on_timer(rt.initiator, kind, net_.now());
            rt.initiator = std::move(t.state);
            apply_initiator(e.node, t.actions);
        } else {
            const Engagement eng = rt.neighbor.engaged.value_or(Engagement{});
            add(TraceRecord{net_.now(), e.node, RecordKind::TimerFire, eng.initiator, eng.op_id,
                            std::string(to_string(kind)), std::nullopt, 0, 0, net_.series()});
            auto t = neighbor_on_timer(rt.neighbor, kind, net_.now());
            rt.neighbor = std::move(t.state);
            apply_neighbor(e.node, eng, t.actions, false);
        }
    }

    void dispatch(NodeId at, const Message& msg, bool replies_via_hw_ack)
    {
        NodeRuntime& rt = nodes_.at(at);
        if (is_broadcast_kind(msg.kind)) {
            const Engagement before = rt.neighbor.engaged.value_or(Engagement{});
            auto t = neighbor_on_message(rt.neighbor, msg, *spec_, net_.now());
            note_disposition(at, msg, t.disposition);
            const Engagement ctx = t.state.engaged.value_or(before);
            rt.neighbor = std::move(t.state);
            apply_neighbor(at, ctx, t.actions, replies_via_hw_ack);
        } else {
            auto t = initiator_on_message(rt.initiator, msg, net_.now());
            note_disposition(at, msg, t.disposition);
            rt.initiator = std::move(t.state);
            apply_initiator(at, t.actions);
        }
    }

    void note_disposition(NodeId at, const Message& msg, Disposition d)
    {
        if (d == Disposition::Stale)
            add(TraceRecord{net_.now(), at, RecordKind::Stale, msg.initiator, msg.op_id, std::string(to_string(msg.kind)),
                            msg.sender, 0, 0, net_.series()});
    }

    void apply_initiator(NodeId p, const Actions& actions)
    {
        NodeRuntime& rt = nodes_.at(p);
        const OpId op = rt.initiator.op_id;
        for (const Action& a : actions) {
            if (auto* s = std::get_if<Send>(&a)) {
                transmit_from_initiator(p, *s, rt.initiator);
            } else if (auto* st = std::get_if<StartTimer>(&a)) {
                net_.start_timer(p, timer_key(true, st->kind), st->duration);
                add(TraceRecord{net_.now(), p, RecordKind::TimerStart, p, op, std::string(to_string(st->kind)),
                                std::nullopt, 0, st->duration.count(), net_.series()});
            } else if (auto* sp = std::get_if<StopTimer>(&a)) {
                if (net_.cancel_timer(p, timer_key(true, sp->kind)))
                    add(TraceRecord{net_.now(), p, RecordKind::TimerCancel, p, op, std::string(to_string(sp->kind)),
                                    std::nullopt, 0, 0, net_.series()});
            } else if (auto* c = std::get_if<CommitWrites>(&a)) {
                for (std::size_t i = 0; i < c->vars.size(); ++i)
                    rt.neighbor.store.set(c->vars[i], c->values[i]);
                add(TraceRecord{net_.now(), p, RecordKind::Commit, p, c->op_id, "self", std::nullopt, 0, 0,
                                net_.series()});
            } else if (auto* r = std::get_if<Return>(&a)) {
                add(TraceRecord{net_.now(), p, RecordKind::Return, p, op, std::string(to_string(r->outcome)),
                                std::nullopt, 0, 0, net_.series()});
            }
        }
    }

    void transmit_from_initiator(NodeId p, const Send& s, const InitiatorState& st)
    {
        if (s.to) {
            net_.unicast(p, *s.to, s.msg);
            return;
        }
        if (cfg_.transport == Transport::Broadcast) {
            net_.broadcast(p, s.msg);
            return;
        }
        const std::vector<NodeId> targets =
            s.msg.kind == MsgKind::InitMsg ? s.msg.invitees : std::vector<NodeId>(st.invitees.begin(), st.invitees.end());
        for (NodeId q : targets)
            net_.unicast(p, q, s.msg);
    }

    void apply_neighbor(NodeId q, const Engagement& ctx, const Actions& actions, bool replies_via_hw_ack)
    {
        for (const Action& a : actions) {
            if (auto* s = std::get_if<Send>(&a)) {
                if (replies_via_hw_ack && (s->msg.kind == MsgKind::AcceptMsg || s->msg.kind == MsgKind::AbortAck))
                    continue;
                net_.unicast(q, s->to.value_or(s->msg.initiator), s->msg);
            } else if (auto* st = std::get_if<StartTimer>(&a)) {
                net_.start_timer(q, timer_key(false, st->kind), st->duration);
                add(TraceRecord{net_.now(), q, RecordKind::TimerStart, ctx.initiator, ctx.op_id,
                                std::string(to_string(st->kind)), std::nullopt, 0, st->duration.count(), net_.series()});
            } else if (auto* sp = std::get_if<StopTimer>(&a)) {
                if (net_.cancel_timer(q, timer_key(false, sp->kind)))
                    add(TraceRecord{net_.now(), q, RecordKind::TimerCancel, ctx.initiator, ctx.op_id,
                                    std::string(to_string(sp->kind)), std::nullopt, 0, 0, net_.series()});
            } else if (auto* c = std::get_if<CommitWrites>(&a)) {
                add(TraceRecord{net_.now(), q, RecordKind::Commit, c->initiator, c->op_id, "", std::nullopt, 0, 0,
                                net_.series()});
            } else if (auto* d = std::get_if<DiscardTentative>(&a)) {
                add(TraceRecord{net_.now(), q, RecordKind::Discard, d->initiator, d->op_id, "", std::nullopt, 0, 0,
                                net_.series()});
            }
        }
    }

    void add(TraceRecord r)
    {
        if (trace_)
            trace_->add(std::move(r));
    }

    const ScenarioConfig& cfg_;
    std::shared_ptr<const LrwSpec> spec_;
    Network<Message> net_;
    Trace* trace_;
    std::map<NodeId, NodeRuntime> nodes_;
    std::map<NodeId, OpId> pending_invoke_;
    Churn churn_;
    Rng churn_rng_;
    SimTime churn_horizon_{0};
    std::vector<std::pair<NodeId, NodeId>> links_;
};

// Runs series `trial` of the scenario in isolation, with times relative to
// the start of the series.
inline Trace run_trial(const ScenarioConfig& cfg, std::size_t trial)
{
    Rng stream = Rng::stream(cfg.seed, trial);
    Rng churn_rng(stream.next());
    Rng radio_rng(stream.next());

    Topology topo = cfg.topology.build();
    const std::vector<NodeId> initiators = cfg.initiators.resolve(topo, trial);
    if (cfg.topology.churn.enabled())
        sample_links(topo, cfg.topology.churn, churn_rng, initiators);
    const std::size_t per_series = cfg.initiators.per_series(topo);

    Trace trace;
    LrwSimulation sim(cfg, std::move(topo), std::move(radio_rng), trial, &trace);
    sim.start_churn(cfg.topology.churn, Rng(churn_rng.next()), cfg.timers.commit);
    sim.trigger_series(initiators, SimTime{0}, static_cast<OpId>(trial * per_series + 1));
    sim.run();
    if (sim.now() >= cfg.trial_span())
        throw Error(ErrorCode::InvalidConfig, "series " + std::to_string(trial) + " overran its " +
                                                  std::to_string(to_ms(cfg.trial_span())) + " ms slot");
    return trace;
}

// Runs every series and stitches them onto one timeline: series k starts at
// k * trial_span(). Output is independent of `threads`.
inline Trace run_scenario(const ScenarioConfig& cfg)
{
    cfg.validate();
    std::vector<Trace> parts(cfg.trials);
    const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.trials)));
    if (workers == 1) {
        for (std::size_t i = 0; i < cfg.trials; ++i)
            parts[i] = run_trial(cfg, i);
    } else {
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < cfg.trials; i += workers)
                        parts[i] = run_trial(cfg, i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool)
            t.join();
        for (auto& e : errors)
            if (e)
                std::rethrow_exception(e);
    }
    Trace out;
    std::size_t total = 0;
    for (const auto& p : parts)
        total += p.size();
    out.reserve(total);
    for (std::size_t i = 0; i < cfg.trials; ++i)
        out.append(parts[i], cfg.trial_span() * static_cast<std::int64_t>(i));
    return out;
}

} // namespace lrw

#endif // LRW_SIMNET_HPP
