#ifndef LRW_EVENT_QUEUE_HPP
#define LRW_EVENT_QUEUE_HPP

#include "lrw/core.hpp"

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

namespace lrw {

// Min-queue ordered by (time, insertion sequence): equal-time events pop in
// the order they were pushed.
template <class Event>
class EventQueue {
public:
    struct Entry {
        SimTime time;
        std::uint64_t seq;
        Event event;
    };

    std::uint64_t push(SimTime at, Event ev)
    {
        if (at < now_)
            throw Error(ErrorCode::InvalidConfig, "event scheduled in the past");
        const std::uint64_t seq = next_seq_++;
        heap_.push_back(Entry{at, seq, std::move(ev)});
        std::push_heap(heap_.begin(), heap_.end(), later);
        return seq;
    }

    Entry pop()
    {
        std::pop_heap(heap_.begin(), heap_.end(), later);
        Entry e = std::move(heap_.back());
        heap_.pop_back();
        now_ = e.time;
        return e;
    }

    bool empty() const noexcept { return heap_.empty(); }
    std::size_t size() const noexcept { return heap_.size(); }
    SimTime now() const noexcept { return now_; }

private:
    static bool later(const Entry& a, const Entry& b)
    {
        if (a.time != b.time)
            return a.time > b.time;
        return a.seq > b.seq;
    }

    std::vector<Entry> heap_;
    SimTime now_{0};
    std::uint64_t next_seq_ = 0;
};

} // namespace lrw

#endif // LRW_EVENT_QUEUE_HPP
