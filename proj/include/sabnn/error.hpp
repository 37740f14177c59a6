#pragma once

#include <stdexcept>
#include <string>

namespace sabnn {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

}  // namespace sabnn
