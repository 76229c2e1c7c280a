#include <stdint.h>
#include <stdlib.h>

int *alloc_ints(unsigned int n) {
    if (n > SIZE_MAX / sizeof(int)) return NULL;
    int* buf = malloc(n * sizeof(int));
    return buf;
}
