#pragma once

// parse -> track -> emit, each on its own thread. At most `max_in_flight`
// frames exist between the first line of a frame being read and its output
// line being written, so frame f is emitted before frame f+3 is admitted.

#include <condition_variable>
#include <deque>
#include <exception>
#include <functional>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "surgtrack/io/jsonl.hpp"
#include "surgtrack/mot_eval.hpp"
#include "surgtrack/tracker.hpp"

namespace surgtrack::io {

template <class T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : cap_(capacity) {}

    bool push(T v)
    {
        std::unique_lock lk(m_);
        not_full_.wait(lk, [&] { return closed_ || q_.size() < cap_; });
        if (closed_)
            return false;
        q_.push_back(std::move(v));
        not_empty_.notify_one();
        return true;
    }

    std::optional<T> pop()
    {
        std::unique_lock lk(m_);
        not_empty_.wait(lk, [&] { return closed_ || !q_.empty(); });
        if (q_.empty())
            return std::nullopt;
        T v = std::move(q_.front());
        q_.pop_front();
        not_full_.notify_one();
        return v;
    }

    /// No more pushes; pending items can still be popped.
    void close()
    {
        std::lock_guard lk(m_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

private:
    std::size_t cap_;
    std::mutex m_;
    std::condition_variable not_empty_, not_full_;
    std::deque<T> q_;
    bool closed_ = false;
};

/// Counts frames admitted but not yet emitted.
class InFlight {
public:
    explicit InFlight(std::size_t limit) : limit_(limit) {}

    bool acquire()
    {
        std::unique_lock lk(m_);
        cv_.wait(lk, [&] { return aborted_ || n_ < limit_; });
        if (aborted_)
            return false;
        ++n_;
        return true;
    }

    void release()
    {
        std::lock_guard lk(m_);
        --n_;
        cv_.notify_all();
    }

    void abort()
    {
        std::lock_guard lk(m_);
        aborted_ = true;
        cv_.notify_all();
    }

private:
    std::size_t limit_, n_ = 0;
    bool aborted_ = false;
    std::mutex m_;
    std::condition_variable cv_;
};

struct StreamOptions {
    std::size_t max_in_flight = 3;
    std::function<void(const std::string&)> on_warning;
    std::function<double()> clock = steady_seconds;
    std::optional<std::string> header_line;  // written before the first frame
};

struct StreamStats {
    std::size_t frames = 0;
    std::size_t skipped_lines = 0;
    std::vector<double> latencies_s;  // frame complete on input -> its line written
    double wall_seconds = 0.0;
};

inline StreamStats stream_track(std::istream& in, std::ostream& out, const TrackerConfig& config,
                                const StreamOptions& opt = {})
{
    struct Parsed {
        FrameInput frame;
        double ready_at;
    };
    struct Emitted {
        std::string line;
        double ready_at;
    };

    Tracker tracker(config);  // validates before any thread starts
    BoundedQueue<Parsed> to_track(opt.max_in_flight);
    BoundedQueue<Emitted> to_emit(opt.max_in_flight);
    InFlight slots(opt.max_in_flight);
    StreamStats stats;

    std::mutex err_m;
    std::exception_ptr error;
    auto fail = [&](std::exception_ptr e) {
        {
            std::lock_guard lk(err_m);
            if (!error)
                error = e;
        }
        slots.abort();
        to_track.close();
        to_emit.close();
    };

    const double start = opt.clock();
    if (opt.header_line)
        out << *opt.header_line << '\n' << std::flush;

    std::thread parser([&] {
        try {
            DetectionAssembler assembler(true);
            std::size_t warned = 0;
            bool open_frame = false;
            auto hand_over = [&](FrameInput f) { return to_track.push({std::move(f), opt.clock()}); };
            std::string line;
            while (std::getline(in, line)) {
                auto done = assembler.feed(line);
                for (; warned < assembler.warnings().size(); ++warned)
                    if (opt.on_warning)
                        opt.on_warning(assembler.warnings()[warned]);
                for (auto& f : done) {
                    if (!hand_over(std::move(f)))
                        return;
                    open_frame = false;
                }
                if (!open_frame && assembler.has_open_frame()) {
                    if (!slots.acquire())
                        return;
                    open_frame = true;
                }
            }
            if (auto last = assembler.finish())
                hand_over(std::move(*last));
            stats.skipped_lines = assembler.skipped();
            to_track.close();
        } catch (...) {
            fail(std::current_exception());
        }
    });

    std::thread worker([&] {
        try {
            while (auto p = to_track.pop()) {
                const auto out_frame = tracker.step(p->frame.frame_index, p->frame.detections, p->frame.transform);
                if (!to_emit.push({track_frame_line(out_frame.frame_index, out_frame.tracks), p->ready_at}))
                    return;
            }
            to_emit.close();
        } catch (...) {
            fail(std::current_exception());
        }
    });

    std::thread emitter([&] {
        try {
            while (auto e = to_emit.pop()) {
                out << e->line << '\n' << std::flush;
                stats.latencies_s.push_back(opt.clock() - e->ready_at);
                ++stats.frames;
                slots.release();
            }
        } catch (...) {
            fail(std::current_exception());
        }
    });

    parser.join();
    worker.join();
    emitter.join();
    stats.wall_seconds = opt.clock() - start;
    if (error)
        std::rethrow_exception(error);
    return stats;
}

}  // namespace surgtrack::io
