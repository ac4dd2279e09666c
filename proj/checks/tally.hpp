#pragma once

#include <chrono>
#include <exception>
#include <string>

#include "checks.hpp"

namespace egox::checks {

class Tally {
 public:
  Tally(int criterion, std::string name) : start_(std::chrono::steady_clock::now()) {
    result_.criterion = criterion;
    result_.name = std::move(name);
  }

  bool expect(bool cond, const std::string& what) {
    ++result_.total;
    if (cond)
      ++result_.passed;
    else if (failure_.empty())
      failure_ = what;
    return cond;
  }

  template <class Fn>
  void guard(const std::string& what, Fn&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      expect(false, what + ": " + e.what());
    }
  }

  void note(const std::string& text) { notes_ += notes_.empty() ? text : "; " + text; }

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  Result finish() {
    result_.seconds = elapsed();
    result_.detail = failure_.empty() ? notes_ : "first failure: " + failure_;
    return result_;
  }

 private:
  Result result_;
  std::string failure_;
  std::string notes_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace egox::checks
