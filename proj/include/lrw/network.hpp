#ifndef LRW_NETWORK_HPP
#define LRW_NETWORK_HPP

#include "lrw/core.hpp"
#include "lrw/event_queue.hpp"
#include "lrw/rng.hpp"
#include "lrw/topology.hpp"
#include "lrw/trace.hpp"

#include <concepts>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>

namespace lrw {

// What the engine needs from a message type to trace it.
template <class P>
concept TracedPayload = requires(const P& p) {
    { p.kind_label() } -> std::convertible_to<std::string_view>;
    { p.op_initiator() } -> std::same_as<NodeId>;
    { p.op() } -> std::convertible_to<OpId>;
    { p.count_field() } -> std::convertible_to<std::int64_t>;
};

template <class P>
struct Delivery {
    NodeId to;
    NodeId from;
    P msg;
    std::uint64_t tx = 0;
    bool unicast = false;
};

// Hardware acknowledgment of unicast `tx`, arriving back at its transmitter.
template <class P>
struct AckFrame {
    NodeId to;
    NodeId from;
    P msg;
    std::uint64_t tx = 0;
};

struct TimerExpiry {
    NodeId node;
    int key = 0;
};

struct Wakeup {
    NodeId node;
    int tag = 0;
};

template <class P>
using NetEvent = std::variant<Delivery<P>, AckFrame<P>, TimerExpiry, Wakeup>;

// Discrete-event radio network. Each transmission waits for the sender's
// previous one to go on air, then takes one MAC delay draw shared by all its
// receivers; each receiver then gets an independent loss draw.
//
// Draw order per transmission: MAC delay, then one uniform per receiver in
// ascending node order. The drop filter is consulted after the draw, so it
// never shifts the random stream.
template <TracedPayload P>
class Network {
public:
    using DropFilter = std::function<bool(NodeId from, NodeId to, const P&)>;

    Network(Topology topology, RadioModel radio, Rng rng, Trace* trace = nullptr)
        : topology_(std::move(topology))
        , radio_(std::move(radio))
        , rng_(std::move(rng))
        , trace_(trace)
    {
        radio_.validate();
    }

    SimTime now() const noexcept { return queue_.now(); }
    Topology& topology() noexcept { return topology_; }
    const Topology& topology() const noexcept { return topology_; }
    const RadioModel& radio() const noexcept { return radio_; }
    Rng& rng() noexcept { return rng_; }
    Trace* trace() noexcept { return trace_; }

    void set_drop_filter(DropFilter f) { drop_filter_ = std::move(f); }

    std::uint64_t broadcast(NodeId from, const P& msg)
    {
        const std::uint64_t tx = ++tx_counter_;
        record_send(from, std::nullopt, msg, tx);
        const SimTime on_air = claim_channel(from);
        for (NodeId to : topology_.neighbors(from)) {
            if (lost(from, to, msg)) {
                record(RecordKind::Drop, to, from, msg, tx);
                continue;
            }
            queue_.push(on_air + radio_.processing, Delivery<P>{to, from, msg, tx, false});
        }
        return tx;
    }

    std::uint64_t unicast(NodeId from, NodeId to, const P& msg)
    {
        const std::uint64_t tx = ++tx_counter_;
        record_send(from, to, msg, tx);
        const SimTime on_air = claim_channel(from);
        const bool reachable = topology_.is_up(from, to);
        if (lost(from, to, msg) || !reachable) {
            record(RecordKind::Drop, to, from, msg, tx);
            return tx;
        }
        queue_.push(on_air + radio_.processing, Delivery<P>{to, from, msg, tx, true});
        if (radio_.unicast_hw_ack)
            queue_.push(on_air + radio_.ack_delay + radio_.processing, AckFrame<P>{from, to, msg, tx});
        return tx;
    }

    // (Re)arms timer `key` at `node`; an earlier arming of the same key is superseded.
    void start_timer(NodeId node, int key, Micros after)
    {
        const std::uint64_t gen = ++timer_gen_[{node, key}];
        armed_.insert({node, key});
        queue_.push(now() + after, TimerSlot{node, key, gen});
    }

    bool cancel_timer(NodeId node, int key)
    {
        auto it = timer_gen_.find({node, key});
        if (it == timer_gen_.end() || !armed_.contains({node, key}))
            return false;
        ++it->second;
        armed_.erase({node, key});
        return true;
    }

    bool timer_armed(NodeId node, int key) const { return armed_.contains({node, key}); }

    void schedule(SimTime at, NodeId node, int tag) { queue_.push(at, Wakeup{node, tag}); }

    bool idle() const { return queue_.empty(); }

    // Pops the next live event; superseded or cancelled timers are skipped.
    std::optional<NetEvent<P>> next()
    {
        while (!queue_.empty()) {
            auto entry = queue_.pop();
            if (auto* slot = std::get_if<TimerSlot>(&entry.event)) {
                auto it = timer_gen_.find({slot->node, slot->key});
                if (it == timer_gen_.end() || it->second != slot->gen)
                    continue;
                armed_.erase({slot->node, slot->key});
                return TimerExpiry{slot->node, slot->key};
            }
            if (auto* d = std::get_if<Delivery<P>>(&entry.event)) {
                record(RecordKind::Deliver, d->to, d->from, d->msg, d->tx);
                return std::move(*d);
            }
            if (auto* a = std::get_if<AckFrame<P>>(&entry.event)) {
                if (trace_)
                    trace_->add(TraceRecord{now(), a->to, RecordKind::Deliver, a->msg.op_initiator(), a->msg.op(),
                                            "HwAck", a->from, a->tx, 0, series_});
                return std::move(*a);
            }
            return std::get<Wakeup>(entry.event);
        }
        return std::nullopt;
    }

    void set_series(std::uint64_t s) { series_ = s; }
    std::uint64_t series() const { return series_; }

private:
    struct TimerSlot {
        NodeId node;
        int key;
        std::uint64_t gen;
    };
    using Queued = std::variant<Delivery<P>, AckFrame<P>, TimerSlot, Wakeup>;

    SimTime claim_channel(NodeId from)
    {
        const Micros delay{rng_.uniform_int(radio_.mac_delay_lo.count(), radio_.mac_delay_hi.count())};
        SimTime& busy = busy_until_[from];
        const SimTime start = std::max(now(), busy);
        busy = start + delay;
        return busy;
    }

    bool lost(NodeId from, NodeId to, const P& msg)
    {
        const bool drawn = rng_.uniform01() < radio_.loss(from, to);
        return drawn || (drop_filter_ && drop_filter_(from, to, msg));
    }

    void record_send(NodeId from, std::optional<NodeId> to, const P& msg, std::uint64_t tx)
    {
        if (trace_)
            trace_->add(TraceRecord{now(), from, RecordKind::Send, msg.op_initiator(), msg.op(),
                                    std::string(msg.kind_label()), to, tx, msg.count_field(), series_});
    }

    void record(RecordKind kind, NodeId node, NodeId from, const P& msg, std::uint64_t tx)
    {
        if (trace_)
            trace_->add(TraceRecord{now(), node, kind, msg.op_initiator(), msg.op(), std::string(msg.kind_label()),
                                    from, tx, 0, series_});
    }

    Topology topology_;
    RadioModel radio_;
    Rng rng_;
    Trace* trace_;
    DropFilter drop_filter_;
    EventQueue<Queued> queue_;
    std::map<NodeId, SimTime> busy_until_;
    std::map<std::pair<NodeId, int>, std::uint64_t> timer_gen_;
    std::set<std::pair<NodeId, int>> armed_;
    std::uint64_t tx_counter_ = 0;
    std::uint64_t series_ = 0;
};

} // namespace lrw

#endif // LRW_NETWORK_HPP
