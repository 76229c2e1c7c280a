#include <stdlib.h>
#include <unistd.h>

/* Reads n integers from fd into a freshly allocated array. */
int *read_ints(int fd, size_t n) {
    int *arr = malloc(n * sizeof(int));
    if (arr == NULL) {
        return NULL;
    }
    for (size_t i = 0; i < n; i++) {
        if (read(fd, &arr[i], sizeof(int)) != sizeof(int)) {
            free(arr);
            return NULL;
        }
    }
    return arr;
}
