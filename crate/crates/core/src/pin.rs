//! Best-effort thread pinning.

use log::warn;

/// CPUs the process may run on, ascending. Falls back to `0..n` where the
/// affinity mask cannot be read.
pub fn allowed_cpus() -> Vec<usize> {
    #[cfg(target_os = "linux")]
    {
        if let Some(cpus) = linux::current_mask() {
            if !cpus.is_empty() {
                return cpus;
            }
        }
    }
    let n = std::thread::available_parallelism().map_or(1, |n| n.get());
    (0..n).collect()
}

/// CPU that worker `index` is assigned to: workers wrap around the allowed
/// CPUs when there are more workers than hardware threads.
pub fn cpu_for(index: usize, cpus: &[usize]) -> Option<usize> {
    (!cpus.is_empty()).then(|| cpus[index % cpus.len()])
}

/// Pins the calling thread to `cpu` and reads the mask back. Returns the CPU
/// only if the thread is now bound to exactly that one.
pub fn pin_current_thread(cpu: usize) -> Option<usize> {
    #[cfg(target_os = "linux")]
    {
        if let Err(err) = linux::set_mask(cpu) {
            warn!("failed to pin thread to cpu {cpu}: {err}");
            return None;
        }
        match linux::current_mask() {
            Some(mask) if mask == [cpu] => Some(cpu),
            other => {
                warn!("pinning to cpu {cpu} not reflected in affinity mask {other:?}");
                None
            }
        }
    }
    #[cfg(not(target_os = "linux"))]
    {
        warn!("thread pinning is not supported on this platform (cpu {cpu})");
        None
    }
}

#[cfg(target_os = "linux")]
mod linux {
    use std::mem;

    pub fn current_mask() -> Option<Vec<usize>> {
        // SAFETY: cpu_set_t is plain data; zeroed is a valid empty set.
        let mut set: libc::cpu_set_t = unsafe { mem::zeroed() };
        // SAFETY: pid 0 is the calling thread; the size matches `set`.
        let ret =
            unsafe { libc::sched_getaffinity(0, mem::size_of::<libc::cpu_set_t>(), &mut set) };
        if ret != 0 {
            return None;
        }
        let max = 8 * mem::size_of::<libc::cpu_set_t>();
        // SAFETY: indices are below CPU_SETSIZE.
        Some(
            (0..max)
                .filter(|&c| unsafe { libc::CPU_ISSET(c, &set) })
                .collect(),
        )
    }

    pub fn set_mask(cpu: usize) -> std::io::Result<()> {
        if cpu >= 8 * mem::size_of::<libc::cpu_set_t>() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "cpu index beyond CPU_SETSIZE",
            ));
        }
        // SAFETY: as above; `cpu` was bounds checked.
        let mut set: libc::cpu_set_t = unsafe { mem::zeroed() };
        unsafe { libc::CPU_SET(cpu, &mut set) };
        let ret = unsafe { libc::sched_setaffinity(0, mem::size_of::<libc::cpu_set_t>(), &set) };
        if ret == 0 {
            Ok(())
        } else {
            Err(std::io::Error::last_os_error())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_wraps_around() {
        let cpus = [2, 3, 5];
        let got: Vec<_> = (0..7).map(|i| cpu_for(i, &cpus).unwrap()).collect();
        assert_eq!(got, vec![2, 3, 5, 2, 3, 5, 2]);
        assert_eq!(cpu_for(0, &[]), None);
    }

    #[test]
    fn pinning_reads_back() {
        let cpus = allowed_cpus();
        assert!(!cpus.is_empty());
        let cpu = cpus[0];
        std::thread::spawn(move || {
            if cfg!(target_os = "linux") {
                assert_eq!(pin_current_thread(cpu), Some(cpu));
            }
        })
        .join()
        .unwrap();
    }
}
