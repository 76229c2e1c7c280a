#include <stdint.h>
#include <stdlib.h>
#include <unistd.h>

int *read_ints(int fd, size_t n) {
    if (n > SIZE_MAX / sizeof(int)) {
        return NULL;
    }
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
