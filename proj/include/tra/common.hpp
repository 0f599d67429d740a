#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tra {

// Error taxonomy; the CLI maps these onto exit codes (config=1, data=2,
// numeric=3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

namespace detail {
inline void cat_into(std::ostringstream&) {}
template <class A, class... Rest>
void cat_into(std::ostringstream& os, const A& a, const Rest&... rest) {
    os << a;
    cat_into(os, rest...);
}
} // namespace detail

// Builds a diagnostic string from mixed pieces.
template <class... Args>
std::string cat(const Args&... args) {
    std::ostringstream os;
    detail::cat_into(os, args...);
    return os.str();
}

template <class Exc, class... Args>
void require(bool cond, const Args&... args) {
    if (!cond) throw Exc(cat(args...));
}

} // namespace tra
