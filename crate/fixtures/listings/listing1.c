#include <stdlib.h>

int *alloc_ints(unsigned int n) {
    // CWE-190: No overflow guard
    int* buf = malloc(n * sizeof(int));
    return buf;
}
