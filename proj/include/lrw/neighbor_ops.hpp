#ifndef LRW_NEIGHBOR_OPS_HPP
#define LRW_NEIGHBOR_OPS_HPP

#include "lrw/core.hpp"
#include "lrw/network.hpp"
#include "lrw/rng.hpp"
#include "lrw/topology.hpp"
#include "lrw/trace.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace lrw {

struct OpCost {
    std::size_t messages = 0;
    std::size_t rounds = 0;
    bool operator==(const OpCost&) const = default;
};

// Cost of every operation in a trace, keyed by (initiator, op id). Messages
// counts Send records (a broadcast is one message). Rounds partitions the
// operation's sends in time order: a round closes as soon as a node that has
// already transmitted in it transmits again. This matches "every node may
// send once per round" for broadcast transport.
inline std::map<std::pair<NodeId, OpId>, OpCost> operation_costs(const Trace& trace)
{
    std::map<std::pair<NodeId, OpId>, OpCost> cost;
    std::map<std::pair<NodeId, OpId>, std::set<NodeId>> in_round;
    for (const auto& r : trace.records()) {
        if (r.kind != RecordKind::Send)
            continue;
        const auto key = std::pair{r.initiator, r.op_id};
        OpCost& c = cost[key];
        auto& senders = in_round[key];
        if (c.rounds == 0 || senders.contains(r.node)) {
            ++c.rounds;
            senders.clear();
        }
        senders.insert(r.node);
        ++c.messages;
    }
    return cost;
}

// Same accounting applied to an LRW trace.
inline std::map<std::pair<NodeId, OpId>, OpCost> lrw_cost_audit(const Trace& trace) { return operation_costs(trace); }

enum class OpMsgKind { ReadReq, ReadResp, Write, WriteAck, TxRequest, TxReadResp, TxWrite, TxAck, TxNack, TxCancel };

constexpr std::string_view to_string(OpMsgKind k)
{
    switch (k) {
    case OpMsgKind::ReadReq: return "ReadReq";
    case OpMsgKind::ReadResp: return "ReadResp";
    case OpMsgKind::Write: return "Write";
    case OpMsgKind::WriteAck: return "WriteAck";
    case OpMsgKind::TxRequest: return "TxRequest";
    case OpMsgKind::TxReadResp: return "TxReadResp";
    case OpMsgKind::TxWrite: return "TxWrite";
    case OpMsgKind::TxAck: return "TxAck";
    case OpMsgKind::TxNack: return "TxNack";
    case OpMsgKind::TxCancel: return "TxCancel";
    }
    return "?";
}

struct OpMessage {
    OpMsgKind kind = OpMsgKind::ReadReq;
    NodeId initiator;
    NodeId sender;
    OpId op_id = 0;
    std::string var;
    Value value = 0;
    bool ack_requested = false;
    std::vector<NodeId> read_set;
    std::vector<NodeId> write_set;

    std::string_view kind_label() const { return to_string(kind); }
    NodeId op_initiator() const { return initiator; }
    OpId op() const { return op_id; }
    std::int64_t count_field() const { return 0; }
};

struct ReadAllResult {
    std::map<NodeId, Value> values;
    OpCost cost;
};

struct WriteAllResult {
    std::set<NodeId> delivered;
    std::set<NodeId> acked;
    OpCost cost;
};

struct TransactRequest {
    std::set<NodeId> read_set;
    std::set<NodeId> write_set;
    std::string var = "v";
    // Value written to the write set, computed from the read results.
    std::function<Value(const std::map<NodeId, Value>&)> compute = [](const std::map<NodeId, Value>&) { return 1; };
};

struct TransactResult {
    NodeId initiator;
    OpId op_id = 0;
    bool committed = false;
    std::optional<ErrorCode> error; // Conflict or Timeout
    std::map<NodeId, Value> reads;
    OpCost cost;
};

// Read-all, write-all and transact over the simulated radio. Each call runs
// the network until it is quiet, so costs come straight from the trace.
//
// transact: request broadcast, read-set replies, write broadcast, write-set
// acks. Participants lock on the request; a participant locked by another
// transaction answers TxNack, and any TxNack makes the initiator broadcast
// TxCancel. Writes commit on a local timer after TxWrite, with no commit message.
class NeighborOps {
public:
    NeighborOps(Topology topo, RadioModel radio, std::uint64_t seed, Micros timeout = from_ms(200),
                Micros commit_delay = from_ms(100))
        : net_(std::move(topo), std::move(radio), Rng(seed), &trace_)
        , timeout_(timeout)
        , commit_delay_(commit_delay)
    {
        for (NodeId n : net_.topology().nodes())
            nodes_[n];
    }

    VarStore& store(NodeId n) { return nodes_.at(n).store; }
    const Trace& trace() const { return trace_; }
    Network<OpMessage>& network() { return net_; }

    ReadAllResult read_all(NodeId p, const std::string& var)
    {
        const OpId op = ++op_counter_;
        reads_[op] = {};
        net_.broadcast(p, make(OpMsgKind::ReadReq, p, p, op, var));
        const auto expected = net_.topology().neighbors(p);
        run_until_quiet();
        ReadAllResult out{reads_[op], cost_of(p, op)};
        reads_.erase(op);
        if (out.values.size() < expected.size())
            throw Error(ErrorCode::Timeout, "read-all missing " + std::to_string(expected.size() - out.values.size()) +
                                                " responses");
        return out;
    }

    WriteAllResult write_all(NodeId p, const std::string& var, Value value, bool acked)
    {
        const OpId op = ++op_counter_;
        OpMessage m = make(OpMsgKind::Write, p, p, op, var);
        m.value = value;
        m.ack_requested = acked;
        net_.broadcast(p, m);
        run_until_quiet();
        WriteAllResult out;
        for (const auto& r : trace_.records()) {
            if (r.op_id != op || r.kind != RecordKind::Deliver)
                continue;
            if (r.label == to_string(OpMsgKind::Write))
                out.delivered.insert(r.node);
            else if (r.label == to_string(OpMsgKind::WriteAck) && r.peer)
                out.acked.insert(*r.peer);
        }
        out.cost = cost_of(p, op);
        return out;
    }

    // Throws Conflict or Timeout when the transaction does not commit.
    TransactResult transact(NodeId p, TransactRequest req)
    {
        auto results = transact_concurrent({{p, std::move(req)}});
        if (results.front().error)
            throw Error(*results.front().error, "transaction " + std::to_string(results.front().op_id) + " aborted");
        return results.front();
    }

    // Starts every transaction at the current instant and runs until quiet.
    std::vector<TransactResult> transact_concurrent(std::vector<std::pair<NodeId, TransactRequest>> reqs)
    {
        std::vector<OpId> ops;
        for (auto& [p, req] : reqs) {
            for (NodeId q : req.read_set)
                check_member(p, q);
            for (NodeId q : req.write_set)
                check_member(p, q);
            const OpId op = ++op_counter_;
            ops.push_back(op);
            Tx& tx = txs_[op];
            tx.initiator = p;
            tx.req = std::move(req);
        }
        for (OpId op : ops) {
            Tx& tx = txs_.at(op);
            OpMessage m = make(OpMsgKind::TxRequest, tx.initiator, tx.initiator, op, tx.req.var);
            m.read_set.assign(tx.req.read_set.begin(), tx.req.read_set.end());
            m.write_set.assign(tx.req.write_set.begin(), tx.req.write_set.end());
            net_.broadcast(tx.initiator, m);
            net_.schedule(net_.now() + timeout_, tx.initiator, static_cast<int>(op));
            if (tx.req.read_set.empty())
                send_write(op);
        }
        run_until_quiet();
        std::vector<TransactResult> out;
        for (OpId op : ops) {
            Tx& tx = txs_.at(op);
            out.push_back(TransactResult{tx.initiator, op, tx.state == TxState::Committed, tx.error, tx.reads,
                                         cost_of(tx.initiator, op)});
            txs_.erase(op);
        }
        return out;
    }

private:
    enum class TxState { Reading, Writing, Committed, Aborted };

    struct Tx {
        NodeId initiator;
        TransactRequest req;
        TxState state = TxState::Reading;
        std::optional<ErrorCode> error;
        std::map<NodeId, Value> reads;
        std::set<NodeId> acks;
    };

    struct Lock {
        OpId op = 0;
        std::optional<Value> staged;
        std::string var;
    };

    struct NodeState {
        VarStore store;
        std::optional<Lock> lock;
    };

    static constexpr int kCommitTagBase = 1 << 30;

    static OpMessage make(OpMsgKind k, NodeId initiator, NodeId sender, OpId op, std::string var)
    {
        OpMessage m;
        m.kind = k;
        m.initiator = initiator;
        m.sender = sender;
        m.op_id = op;
        m.var = std::move(var);
        return m;
    }

    void check_member(NodeId p, NodeId q) const
    {
        if (!net_.topology().is_up(p, q))
            throw Error(ErrorCode::InvalidConfig, "node " + to_string(q) + " is not a neighbor of " + to_string(p));
    }

    OpCost cost_of(NodeId p, OpId op) const
    {
        auto all = operation_costs(trace_);
        auto it = all.find({p, op});
        return it == all.end() ? OpCost{} : it->second;
    }

    void reply(NodeId from, const OpMessage& to, OpMsgKind kind, Value value = 0)
    {
        OpMessage m = make(kind, to.initiator, from, to.op_id, to.var);
        m.value = value;
        net_.unicast(from, to.initiator, m);
    }

    void run_until_quiet()
    {
        while (auto ev = net_.next()) {
            if (auto* d = std::get_if<Delivery<OpMessage>>(&*ev))
                on_delivery(d->to, d->msg);
            else if (auto* w = std::get_if<Wakeup>(&*ev))
                on_wakeup(*w);
        }
    }

    void on_wakeup(const Wakeup& w)
    {
        if (w.tag >= kCommitTagBase) {
            NodeState& ns = nodes_.at(w.node);
            const OpId op = static_cast<OpId>(w.tag - kCommitTagBase);
            if (ns.lock && ns.lock->op == op) {
                if (ns.lock->staged) {
                    ns.store.set(ns.lock->var, *ns.lock->staged);
                    trace_.add(TraceRecord{net_.now(), w.node, RecordKind::Commit, txs_initiator(op), op, "", {}, 0, 0, 0});
                }
                ns.lock.reset();
            }
            return;
        }
        const OpId op = static_cast<OpId>(w.tag);
        auto it = txs_.find(op);
        if (it == txs_.end())
            return;
        Tx& tx = it->second;
        if (tx.state == TxState::Reading || tx.state == TxState::Writing)
            abort(op, ErrorCode::Timeout);
    }

    NodeId txs_initiator(OpId op) const
    {
        auto it = txs_.find(op);
        return it == txs_.end() ? NodeId{} : it->second.initiator;
    }

    void abort(OpId op, ErrorCode why)
    {
        Tx& tx = txs_.at(op);
        tx.state = TxState::Aborted;
        tx.error = why;
        net_.broadcast(tx.initiator, make(OpMsgKind::TxCancel, tx.initiator, tx.initiator, op, tx.req.var));
    }

    void send_write(OpId op)
    {
        Tx& tx = txs_.at(op);
        tx.state = TxState::Writing;
        OpMessage m = make(OpMsgKind::TxWrite, tx.initiator, tx.initiator, op, tx.req.var);
        m.value = tx.req.compute(tx.reads);
        m.write_set.assign(tx.req.write_set.begin(), tx.req.write_set.end());
        net_.broadcast(tx.initiator, m);
        if (tx.req.write_set.empty())
            tx.state = TxState::Committed;
    }

    static bool contains(const std::vector<NodeId>& v, NodeId n) { return std::find(v.begin(), v.end(), n) != v.end(); }

    void on_delivery(NodeId at, const OpMessage& m)
    {
        NodeState& ns = nodes_.at(at);
        switch (m.kind) {
        case OpMsgKind::ReadReq: reply(at, m, OpMsgKind::ReadResp, ns.store.read_or(m.var, 0)); break;
        case OpMsgKind::ReadResp:
            if (auto it = reads_.find(m.op_id); it != reads_.end())
                it->second[m.sender] = m.value;
            break;
        case OpMsgKind::Write:
            ns.store.set(m.var, m.value);
            if (m.ack_requested)
                reply(at, m, OpMsgKind::WriteAck);
            break;
        case OpMsgKind::WriteAck: break;
        case OpMsgKind::TxRequest: {
            const bool reader = contains(m.read_set, at);
            if (!reader && !contains(m.write_set, at))
                break;
            if (ns.lock && ns.lock->op != m.op_id) {
                reply(at, m, OpMsgKind::TxNack);
                break;
            }
            ns.lock = Lock{m.op_id, std::nullopt, m.var};
            if (reader)
                reply(at, m, OpMsgKind::TxReadResp, ns.store.read_or(m.var, 0));
            break;
        }
        case OpMsgKind::TxWrite: {
            const bool writer = contains(m.write_set, at);
            if (!writer) {
                if (ns.lock && ns.lock->op == m.op_id)
                    ns.lock.reset();
                break;
            }
            if (ns.lock && ns.lock->op != m.op_id) {
                reply(at, m, OpMsgKind::TxNack);
                break;
            }
            ns.lock = Lock{m.op_id, m.value, m.var};
            net_.schedule(net_.now() + commit_delay_, at, kCommitTagBase + static_cast<int>(m.op_id));
            reply(at, m, OpMsgKind::TxAck);
            break;
        }
        case OpMsgKind::TxCancel:
            if (ns.lock && ns.lock->op == m.op_id)
                ns.lock.reset();
            break;
        case OpMsgKind::TxReadResp:
        case OpMsgKind::TxAck:
        case OpMsgKind::TxNack: on_tx_reply(m); break;
        }
    }

    void on_tx_reply(const OpMessage& m)
    {
        auto it = txs_.find(m.op_id);
        if (it == txs_.end())
            return;
        Tx& tx = it->second;
        if (tx.state == TxState::Aborted || tx.state == TxState::Committed)
            return;
        if (m.kind == OpMsgKind::TxNack) {
            abort(m.op_id, ErrorCode::Conflict);
            return;
        }
        if (m.kind == OpMsgKind::TxReadResp && tx.state == TxState::Reading) {
            tx.reads[m.sender] = m.value;
            if (tx.reads.size() == tx.req.read_set.size())
                send_write(m.op_id);
        } else if (m.kind == OpMsgKind::TxAck && tx.state == TxState::Writing) {
            tx.acks.insert(m.sender);
            if (tx.acks.size() == tx.req.write_set.size())
                tx.state = TxState::Committed;
        }
    }

    Trace trace_;
    Network<OpMessage> net_;
    Micros timeout_;
    Micros commit_delay_;
    std::map<NodeId, NodeState> nodes_;
    std::map<OpId, std::map<NodeId, Value>> reads_;
    std::map<OpId, Tx> txs_;
    OpId op_counter_ = 0;
};

} // namespace lrw

#endif // LRW_NEIGHBOR_OPS_HPP
