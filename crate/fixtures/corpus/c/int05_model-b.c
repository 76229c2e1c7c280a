#include <stdint.h>
#include <stdlib.h>

uint32_t *make_grid(size_t rows, size_t cols) {
    size_t cells;
    if (__builtin_mul_overflow(rows, cols, &cells)) {
        return NULL;
    }
    return calloc(cells, sizeof(uint32_t));
}
