#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dsgd {

using Vec2 = Eigen::Vector2d;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define DSGD_DEFINE_ERROR(name)                  \
    class name : public Error {                  \
    public:                                      \
        using Error::Error;                      \
    };

DSGD_DEFINE_ERROR(ParseError)
DSGD_DEFINE_ERROR(GeometryError)
DSGD_DEFINE_ERROR(NonmanifoldError)
DSGD_DEFINE_ERROR(StarShapeError)
DSGD_DEFINE_ERROR(UnsupportedDegree)
DSGD_DEFINE_ERROR(SingularGram)
DSGD_DEFINE_ERROR(SpecError)
DSGD_DEFINE_ERROR(SingularSystem)
DSGD_DEFINE_ERROR(SolverError)
DSGD_DEFINE_ERROR(LineSearchStall)
DSGD_DEFINE_ERROR(EigenFailure)

#undef DSGD_DEFINE_ERROR

/// Number of worker threads: DSGD_THREADS when set, otherwise 1.
inline unsigned default_threads()
{
    if (const char* env = std::getenv("DSGD_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0)
            return static_cast<unsigned>(n);
    }
    return 1;
}

/// Runs f(i) for i in [0, n), split in contiguous chunks over the given number of threads.
/// f must only write to per-index storage.
template <typename F>
void parallel_for(std::size_t n, F&& f, unsigned threads = default_threads())
{
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i)
            f(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        pool.emplace_back([&, t, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i)
                    f(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool)
        th.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Unit normal obtained by rotating the direction a->b clockwise; outward for a CCW loop.
inline Vec2 right_normal(const Vec2& a, const Vec2& b)
{
    const Vec2 t = b - a;
    return Vec2(t.y(), -t.x()).normalized();
}

} // namespace dsgd
