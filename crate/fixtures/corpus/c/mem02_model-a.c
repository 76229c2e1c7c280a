#include <stdlib.h>
#include <string.h>

char *join_words(const char *a, const char *b) {
    size_t la = strlen(a);
    size_t lb = strlen(b);
    char *out = malloc(la + lb + 2);
    if (!out) return NULL;
    strcpy(out, a);
    strcat(out, " ");
    strcat(out, b);
    return out;
}
