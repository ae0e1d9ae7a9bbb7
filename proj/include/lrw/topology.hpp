#ifndef LRW_TOPOLOGY_HPP
#define LRW_TOPOLOGY_HPP

#include "lrw/core.hpp"
#include "lrw/rng.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <utility>
#include <vector>

namespace lrw {

// Undirected graph of potential links, each currently up or down. The current
// neighborhood N(p) is the set of up links at p, always within the potential set.
class Topology {
public:
    Topology() = default;

    void add_node(NodeId n)
    {
        if (potential_.emplace(n, std::set<NodeId>{}).second)
            nodes_.insert(std::upper_bound(nodes_.begin(), nodes_.end(), n), n);
    }

    void add_link(NodeId a, NodeId b)
    {
        if (a == b)
            throw Error(ErrorCode::InvalidConfig, "self link at node " + to_string(a));
        add_node(a);
        add_node(b);
        potential_[a].insert(b);
        potential_[b].insert(a);
        up_.insert(key(a, b));
    }

    void set_link(NodeId a, NodeId b, bool up)
    {
        if (!is_potential(a, b))
            throw Error(ErrorCode::InvalidConfig,
                        "link " + to_string(a) + "-" + to_string(b) + " is outside the potential neighborhood");
        if (up)
            up_.insert(key(a, b));
        else
            up_.erase(key(a, b));
    }

    bool is_potential(NodeId a, NodeId b) const
    {
        auto it = potential_.find(a);
        return it != potential_.end() && it->second.contains(b);
    }
    bool is_up(NodeId a, NodeId b) const { return a != b && up_.contains(key(a, b)); }

    const std::vector<NodeId>& nodes() const noexcept { return nodes_; }

    const std::set<NodeId>& potential(NodeId n) const
    {
        static const std::set<NodeId> none;
        auto it = potential_.find(n);
        return it == potential_.end() ? none : it->second;
    }

    std::set<NodeId> neighbors(NodeId n) const
    {
        std::set<NodeId> out;
        for (NodeId q : potential(n))
            if (is_up(n, q))
                out.insert(q);
        return out;
    }

    // Potential links as (low, high) pairs in ascending order.
    std::vector<std::pair<NodeId, NodeId>> potential_links() const
    {
        std::vector<std::pair<NodeId, NodeId>> out;
        for (const auto& [a, qs] : potential_)
            for (NodeId b : qs)
                if (a < b)
                    out.emplace_back(a, b);
        return out;
    }

    bool is_symmetric() const
    {
        for (NodeId p : nodes_)
            for (NodeId q : neighbors(p))
                if (!neighbors(q).contains(p))
                    return false;
        return true;
    }

    // Center 0 with leaves 1..k; leaves are not linked to each other.
    static Topology star(std::size_t k)
    {
        Topology t;
        t.add_node(NodeId{0});
        for (std::uint32_t i = 1; i <= k; ++i)
            t.add_link(NodeId{0}, NodeId{i});
        return t;
    }

    // Nodes 1..n, all mutually linked.
    static Topology clique(std::size_t n)
    {
        Topology t;
        for (std::uint32_t i = 1; i <= n; ++i) {
            t.add_node(NodeId{i});
            for (std::uint32_t j = 1; j < i; ++j)
                t.add_link(NodeId{j}, NodeId{i});
        }
        return t;
    }

    // Nodes 1..n on a line; v_i and v_j are potential neighbors iff 0 < |i-j| <= radius.
    static Topology line(std::size_t n, std::size_t radius)
    {
        Topology t;
        for (std::uint32_t i = 1; i <= n; ++i) {
            t.add_node(NodeId{i});
            for (std::uint32_t j = (i > radius ? i - static_cast<std::uint32_t>(radius) : 1); j < i; ++j)
                t.add_link(NodeId{j}, NodeId{i});
        }
        return t;
    }

private:
    static std::pair<NodeId, NodeId> key(NodeId a, NodeId b) { return a < b ? std::pair{a, b} : std::pair{b, a}; }

    std::vector<NodeId> nodes_;
    std::map<NodeId, std::set<NodeId>> potential_;
    std::set<std::pair<NodeId, NodeId>> up_;
};

// 31 motes v1..v31 whose potential neighbors are the motes within three positions.
inline Topology paper_topology_31() { return Topology::line(31, 3); }

// Motes v_i with i mod 6 == 1.
inline std::vector<NodeId> spaced_initiators(std::size_t n = 31)
{
    std::vector<NodeId> out;
    for (std::uint32_t i = 1; i <= n; ++i)
        if (i % 6 == 1)
            out.push_back(NodeId{i});
    return out;
}

// Link churn within the potential superset: each link is an independent
// two-state Markov process with stationary up-probability `up_fraction` and
// total flip rate `flip_rate_hz` (0 freezes links for the whole trial).
struct Churn {
    double up_fraction = 1.0;
    double flip_rate_hz = 0.0;
    bool enabled() const { return up_fraction < 1.0 || flip_rate_hz > 0.0; }
};

// Draws an initial up/down state for every potential link in ascending link
// order. Nodes listed in `keep_connected` that end up isolated get one link
// (the lowest-numbered potential neighbor) forced back up.
inline void sample_links(Topology& topo, const Churn& churn, Rng& rng, const std::vector<NodeId>& keep_connected = {})
{
    for (auto [a, b] : topo.potential_links())
        topo.set_link(a, b, rng.uniform01() < churn.up_fraction);
    for (NodeId n : keep_connected)
        if (topo.neighbors(n).empty() && !topo.potential(n).empty())
            topo.set_link(n, *topo.potential(n).begin(), true);
}

struct RadioModel {
    double loss_prob = 0.0;
    // Directed per-link overrides of loss_prob, keyed (from, to).
    std::map<std::pair<NodeId, NodeId>, double> link_loss;
    Micros mac_delay_lo = from_ms(3);
    Micros mac_delay_hi = from_ms(12);
    // Receive-side handling time added to every delivery, acks included.
    Micros processing = from_ms(4);
    bool unicast_hw_ack = false;
    Micros ack_delay = from_ms(1);

    double loss(NodeId from, NodeId to) const
    {
        auto it = link_loss.find({from, to});
        return it == link_loss.end() ? loss_prob : it->second;
    }

    void validate() const
    {
        auto bad = [](double p) { return !(p >= 0.0 && p <= 1.0); };
        if (bad(loss_prob))
            throw Error(ErrorCode::InvalidConfig, "loss_prob must lie in [0,1]");
        for (const auto& [link, p] : link_loss)
            if (bad(p))
                throw Error(ErrorCode::InvalidConfig, "link loss must lie in [0,1]");
        if (mac_delay_lo.count() < 0 || mac_delay_hi < mac_delay_lo)
            throw Error(ErrorCode::InvalidConfig, "MAC delay bounds must satisfy 0 <= lo <= hi");
        if (processing.count() < 0 || ack_delay.count() < 0)
            throw Error(ErrorCode::InvalidConfig, "processing and ack delays must be non-negative");
    }
};

} // namespace lrw

#endif // LRW_TOPOLOGY_HPP
