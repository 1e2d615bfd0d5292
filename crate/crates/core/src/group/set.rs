use super::{Element, Group};

/// A deduplicated finite set of group elements, kept in canonical order.
///
/// `truncated` is set whenever the set was produced under a size cap and is
/// only part of the mathematically intended set. Equality compares elements
/// only.
#[derive(Clone, Debug, Default)]
pub struct FiniteSet {
    elements: Vec<Element>,
    truncated: bool,
    symmetric: bool,
}

impl FiniteSet {
    pub fn new(elements: impl IntoIterator<Item = Element>) -> Self {
        let mut elements: Vec<Element> = elements.into_iter().collect();
        elements.sort_unstable();
        elements.dedup();
        FiniteSet {
            elements,
            truncated: false,
            symmetric: false,
        }
    }

    pub fn singleton(x: Element) -> Self {
        FiniteSet::new([x])
    }

    pub fn empty() -> Self {
        FiniteSet::default()
    }

    pub(crate) fn with_truncation(mut self, truncated: bool) -> Self {
        self.truncated = truncated;
        self
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Element> {
        self.elements.iter()
    }

    pub fn as_slice(&self) -> &[Element] {
        &self.elements
    }

    pub fn contains(&self, x: &Element) -> bool {
        self.elements.binary_search(x).is_ok()
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// The symmetric flag; only ever set by [`FiniteSet::certify_symmetric`].
    pub fn is_certified_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Checks `x^{-1}` is present for every `x` and records the result.
    pub fn certify_symmetric(&mut self, group: &Group) -> bool {
        self.symmetric = self.elements.iter().all(|x| self.contains(&group.inv_raw(x)));
        self.symmetric
    }

    pub fn union(&self, other: &FiniteSet) -> FiniteSet {
        let mut out = FiniteSet::new(self.elements.iter().chain(other.iter()).cloned());
        out.truncated = self.truncated || other.truncated;
        out
    }

    pub fn filter(&self, keep: impl Fn(&Element) -> bool) -> FiniteSet {
        FiniteSet {
            elements: self.elements.iter().filter(|x| keep(x)).cloned().collect(),
            truncated: self.truncated,
            symmetric: false,
        }
    }

    /// `self ∪ self⁻¹`, certified symmetric.
    pub fn symmetrized(&self, group: &Group) -> FiniteSet {
        let mut out = FiniteSet::new(
            self.elements
                .iter()
                .cloned()
                .chain(self.elements.iter().map(|x| group.inv_raw(x))),
        );
        out.truncated = self.truncated;
        out.symmetric = true;
        out
    }

    pub fn into_vec(self) -> Vec<Element> {
        self.elements
    }
}

impl PartialEq for FiniteSet {
    fn eq(&self, other: &Self) -> bool {
        self.elements == other.elements
    }
}

impl Eq for FiniteSet {}

impl<'a> IntoIterator for &'a FiniteSet {
    type Item = &'a Element;
    type IntoIter = std::slice::Iter<'a, Element>;

    fn into_iter(self) -> Self::IntoIter {
        self.elements.iter()
    }
}

impl FromIterator<Element> for FiniteSet {
    fn from_iter<T: IntoIterator<Item = Element>>(iter: T) -> Self {
        FiniteSet::new(iter)
    }
}
