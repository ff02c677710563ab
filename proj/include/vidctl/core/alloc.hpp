#pragma once

#include <cstddef>
#include <new>

namespace vidctl::core::detail {

void* pool_alloc(size_t bytes);
void pool_free(void* block, size_t bytes);

}  // namespace vidctl::core::detail
