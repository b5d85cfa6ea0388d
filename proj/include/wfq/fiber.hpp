#pragma once

#include <cassert>
#include <cstdint>
#include <cstring>
#include <memory>

namespace wfq {

extern "C" void wfq_fiber_swap(void** save_sp, void* load_sp);
extern "C" void wfq_fiber_thunk();

// Stackful fiber used by the deterministic scheduler. A fiber is re-armed
// with `arm` for every operation; abandoning a suspended fiber is legal
// because everything its stack refers to lives in the run's arena.
class Fiber {
 public:
  using Entry = void (*)(void*);

  explicit Fiber(std::size_t stack_bytes = kDefaultStackBytes)
      : stack_bytes_(stack_bytes), stack_(new char[stack_bytes]) {}

  Fiber(const Fiber&) = delete;
  Fiber& operator=(const Fiber&) = delete;

  void arm(Entry entry, void* arg) {
    // Stack layout (pop order of wfq_fiber_swap's restore path):
    // [mxcsr|fcw] r15 r14 r13(entry) r12(arg) rbx rbp ret(thunk)
    auto top = reinterpret_cast<std::uintptr_t>(stack_.get()) + stack_bytes_;
    top &= ~std::uintptr_t(15);
    auto* sp = reinterpret_cast<std::uint64_t*>(top);
    *--sp = 0;  // two pads so the thunk starts with rsp % 16 == 0
    *--sp = 0;
    *--sp = reinterpret_cast<std::uint64_t>(&wfq_fiber_thunk);
    *--sp = 0;                                       // rbp
    *--sp = 0;                                       // rbx
    *--sp = reinterpret_cast<std::uint64_t>(arg);    // r12
    *--sp = reinterpret_cast<std::uint64_t>(entry);  // r13
    *--sp = 0;                                       // r14
    *--sp = 0;                                       // r15
    *--sp = initial_fpstate();
    sp_ = sp;
    assert((reinterpret_cast<std::uintptr_t>(sp) & 15) == 0);
  }

  // Switch from the scheduler into this fiber.
  void resume(void** scheduler_sp) { wfq_fiber_swap(scheduler_sp, sp_); }

  // Called from inside the fiber to give control back.
  void yield_to(void* scheduler_sp) { wfq_fiber_swap(&sp_, scheduler_sp); }

  void* sp() const { return sp_; }
  void set_sp(void* sp) { sp_ = sp; }
  void** sp_slot() { return &sp_; }

  static constexpr std::size_t kDefaultStackBytes = 256 * 1024;

 private:
  static std::uint64_t initial_fpstate() {
    std::uint32_t mxcsr;
    std::uint16_t fcw;
    asm volatile("stmxcsr %0" : "=m"(mxcsr));
    asm volatile("fnstcw %0" : "=m"(fcw));
    return static_cast<std::uint64_t>(mxcsr) |
           (static_cast<std::uint64_t>(fcw) << 32);
  }

  std::size_t stack_bytes_;
  std::unique_ptr<char[]> stack_;
  void* sp_ = nullptr;
};

}  // namespace wfq
