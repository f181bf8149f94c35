#include <stdio.h>
#include <string.h>

#include "wayfinder.h"

int main(void) {
    WfSession *s = NULL;
    if (wf_session_new(0, 300000, &s) != WF_STATUS_OK) return 1;
    uint64_t rev = 0;
    if (wf_session_navigate(s, 1000, "http://a.test/", NULL, "Home", &rev) != WF_STATUS_OK) return 2;
    if (wf_session_navigate(s, 2000, "http://a.test/next", "http://a.test/", NULL, &rev) != WF_STATUS_OK) return 3;
    printf("revision %llu\n", (unsigned long long)rev);

    if (wf_session_edit(s, "{\"op\":\"reparent\",\"node\":1,\"new_parent\":2}", NULL) == WF_STATUS_CYCLE) {
        printf("cycle rejected: %s\n", wf_last_error());
    }

    char *svg = NULL;
    if (wf_session_export_svg(s, NULL, &svg) != WF_STATUS_OK || strstr(svg, "<svg") == NULL) return 4;
    wf_string_free(svg);
    wf_session_free(s);

    WfCache *c = NULL;
    WfLookup hit = WF_LOOKUP_ABSENT;
    wf_cache_new(60, 60, 1024, &c);
    wf_cache_insert(c, "http://a.test/", (const uint8_t *)"body", 4, 0, NULL);
    wf_cache_lookup(c, "http://a.test/", 1, &hit);
    wf_cache_free(c);
    return hit == WF_LOOKUP_HIT ? 0 : 5;
}
