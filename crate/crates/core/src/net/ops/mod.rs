pub(crate) mod attention;
pub(crate) mod conv;
pub(crate) mod roi_align;
