/*
 * Copyright 2026 The maru Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cstddef>

namespace maru {

// Thread-local accounting of temporary buffers. Kernels open a Lease for
// every scratch buffer they allocate; tests and the benchmark read the peak
// concurrent size and the largest single buffer between reset() calls.
class ScratchMeter {
 public:
  struct Snapshot {
    std::size_t peak_total = 0;   // max concurrently live floats
    std::size_t largest = 0;      // largest single buffer, in floats
  };

  class Lease {
   public:
    explicit Lease(std::size_t floats) : floats_(floats) { acquire(floats_); }
    ~Lease() { release(floats_); }
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;

   private:
    std::size_t floats_;
  };

  static void reset() {
    auto& s = state();
    s.live = 0;
    s.snap = {};
  }

  static Snapshot snapshot() { return state().snap; }

 private:
  struct State {
    std::size_t live = 0;
    Snapshot snap;
  };

  static State& state() {
    thread_local State s;
    return s;
  }

  static void acquire(std::size_t floats) {
    auto& s = state();
    s.live += floats;
    s.snap.peak_total = std::max(s.snap.peak_total, s.live);
    s.snap.largest = std::max(s.snap.largest, floats);
  }

  static void release(std::size_t floats) { state().live -= floats; }
};

}  // namespace maru
