/* NOTE Read lock is not acquired at the beginning */
static int ldv_rlock = 0;

void ldv_read_lock(void)
{
    /* NOTE Acquire read lock */
    ldv_rlock++;
}

void ldv_read_unlock(void)
{
    if (ldv_rlock == 0)
        /* ASSERT Read lock should be acquired before releasing it */
        ldv_assert();
    /* NOTE Release read lock */
    ldv_rlock--;
}

void ldv_check_final_state(void)
{
    if (ldv_rlock != 0)
        /* ASSERT All acquired read locks should be released before finishing operation */
        ldv_assert();
}
