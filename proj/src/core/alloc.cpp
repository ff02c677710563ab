#include "vidctl/core/alloc.hpp"

#include <cstdlib>
#include <map>
#include <mutex>
#include <vector>

namespace vidctl::core::detail {

// Size-bucketed freelist for tensor buffers. Training steps allocate and
// drop the same few hundred intermediate shapes every iteration; recycling
// the blocks keeps the hot path free of mmap/page-fault churn.
namespace {
struct Pool {
  std::mutex mutex;
  std::map<size_t, std::vector<void*>> free_blocks;
  size_t cached_bytes = 0;
  static constexpr size_t kMaxCached = size_t(1) << 31;  // 2 GiB cap

  ~Pool() {
    for (auto& [size, blocks] : free_blocks)
      for (void* p : blocks) std::free(p);
  }
};

Pool& pool() {
  static Pool* p = new Pool();  // leaked deliberately; outlives every tensor
  return *p;
}
}  // namespace

void* pool_alloc(size_t bytes) {
  if (bytes == 0) bytes = 1;
  {
    Pool& p = pool();
    std::lock_guard<std::mutex> lock(p.mutex);
    auto it = p.free_blocks.find(bytes);
    if (it != p.free_blocks.end() && !it->second.empty()) {
      void* block = it->second.back();
      it->second.pop_back();
      p.cached_bytes -= bytes;
      return block;
    }
  }
  void* block = std::malloc(bytes);
  if (!block) throw std::bad_alloc();
  return block;
}

void pool_free(void* block, size_t bytes) {
  if (!block) return;
  if (bytes == 0) bytes = 1;
  Pool& p = pool();
  std::lock_guard<std::mutex> lock(p.mutex);
  if (p.cached_bytes + bytes > Pool::kMaxCached) {
    std::free(block);
    return;
  }
  p.free_blocks[bytes].push_back(block);
  p.cached_bytes += bytes;
}

}  // namespace vidctl::core::detail
