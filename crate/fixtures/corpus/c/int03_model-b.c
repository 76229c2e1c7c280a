#include <string.h>

struct packet {
    char payload[256];
    int length;
};

void copy_payload(char *dst, const struct packet *p) {
    int len = p->length - 4;
    memcpy(dst, p->payload, len);
}
