#include <stdio.h>
#include <stdlib.h>

/* Table lookup with an unchecked index, fed index 16 of a 16-entry table. */
static int lookup(const int *table, int idx) {
    return table[idx];
}

int main(void) {
    int *table = malloc(16 * sizeof(int));
    if (table == NULL) {
        return 1;
    }
    for (int i = 0; i < 16; i++) {
        table[i] = i * i;
    }
    printf("%d\n", lookup(table, 16));
    free(table);
    return 0;
}
